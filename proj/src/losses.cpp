#include "sgmlab/losses.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sgmlab/diffusion.hpp"
#include "sgmlab/ot.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/rng.hpp"

namespace sgmlab {

void McConfig::validate() const {
  if (samples < 2) throw InvalidArgument("mc: need at least 2 samples per cell");
  if (antithetic && (samples % 2 != 0 || samples < 4)) throw InvalidArgument("mc: antithetic pairs need an even sample count >= 4");
  if (threads < 1) throw InvalidArgument("mc: threads must be >= 1");
}

void to_json(nlohmann::json& j, const McConfig& mc) {
  j = {{"samples_per_atom", mc.samples},
       {"seed", mc.seed},
       {"common_random_numbers", mc.common_random_numbers},
       {"antithetic", mc.antithetic}};
}

namespace {

enum class Side { population, empirical };

enum class Term {
  eps_s,           // |s - 2S|^2
  risk,            // |s - 2c|^2
  esm,             // |s - 2S_n|^2
  c_true,          // 4 |S - c|^2
  c_emp,           // 4 |c - S_n|^2
  cond_sq,         // 4 |c|^2
  true_sq,         // 4 |S|^2
  emp_sq,          // 4 |S_n|^2
  eps_loss,        // |eps - g|^2
  dsm_lebesgue,    // |s_theta - 2 grad log p_{t|0}|^2, Lebesgue
};

bool needs_score(Term t) { return t == Term::eps_s || t == Term::risk || t == Term::esm; }
bool needs_true(Term t) { return t == Term::eps_s || t == Term::c_true || t == Term::true_sq; }
bool needs_emp(Term t) { return t == Term::esm || t == Term::c_emp || t == Term::emp_sq; }
bool needs_net(Term t) { return t == Term::eps_loss || t == Term::dsm_lebesgue; }

struct Sources {
  const ScoreField* score = nullptr;
  const ScoreNet* net = nullptr;
  const GmmSpec* spec = nullptr;
  const Dataset* data = nullptr;
};

// Draws `rows` standard normals per row, or half of them mirrored when antithetic.
PointMatrix gaussian_rows(RngStream& rng, Eigen::Index rows, Eigen::Index dim, bool antithetic) {
  if (!antithetic) return rng.normal_matrix(rows, dim);
  PointMatrix g(rows, dim);
  const Eigen::Index half = rows / 2;
  g.topRows(half) = rng.normal_matrix(half, dim);
  g.bottomRows(half) = -g.topRows(half);
  return g;
}

std::uint64_t salted(const McConfig& mc, std::uint64_t salt) {
  return mc.common_random_numbers ? mc.seed : mc.seed ^ splitmix64(salt + 0x51ed27aULL);
}

// Per-replicate values of each requested term: rows are replicates, columns terms.
Eigen::MatrixXd replicate_terms(Side side, const Sources& src, const TimeMeasure& measure, const McConfig& mc,
                                std::span<const Term> terms, std::uint64_t salt) {
  mc.validate();
  measure.validate();
  const auto M = static_cast<Eigen::Index>(mc.samples);
  const auto K = static_cast<Eigen::Index>(terms.size());
  bool want_score = false, want_true = false, want_emp = false, want_net = false;
  for (Term t : terms) {
    want_score |= needs_score(t);
    want_true |= needs_true(t);
    want_emp |= needs_emp(t);
    want_net |= needs_net(t);
  }
  if (want_score && !src.score) throw InvalidArgument("functional needs a score field");
  if (want_net && !src.net) throw InvalidArgument("functional needs a score network");
  if ((want_true || side == Side::population) && !src.spec) throw InvalidArgument("functional needs a data distribution");
  if ((want_emp || side == Side::empirical) && !src.data) throw InvalidArgument("functional needs a data set");
  if (src.data) src.data->validate();
  const Eigen::Index dim = src.spec ? src.spec->dim() : src.data->dim();
  const std::uint64_t seed = salted(mc, salt);
  const Eigen::Index n_points = side == Side::population ? 1 : src.data->size();
  std::vector<Eigen::MatrixXd> per_atom(measure.size());

  parallel_for(measure.size(), mc.threads, [&](std::size_t a) {
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(M, K);
    const double t = measure.atoms[a].time;
    const double w = measure.atoms[a].weight / static_cast<double>(n_points);
    const double root_alpha = std::exp(-t);
    const double sd = std::sqrt(-std::expm1(-2.0 * t));
    for (Eigen::Index i = 0; i < n_points; ++i) {
      // Under common random numbers every source point sees the same noise per atom.
      const std::uint64_t cell = mc.common_random_numbers ? a : a * static_cast<std::uint64_t>(n_points + 1) + static_cast<std::uint64_t>(i);
      RngStream noise_rng(seed, Purpose::forward_noise, cell);
      const PointMatrix g = gaussian_rows(noise_rng, M, dim, mc.antithetic);
      PointMatrix z(M, dim);
      if (side == Side::population) {
        RngStream data_rng(seed, Purpose::mc, a);
        if (mc.antithetic) {
          const Eigen::Index half = M / 2;
          z.topRows(half) = sample_gmm(*src.spec, static_cast<std::size_t>(half), data_rng).points;
          z.bottomRows(half) = z.topRows(half);
        } else {
          z = sample_gmm(*src.spec, mc.samples, data_rng).points;
        }
      } else {
        z.rowwise() = src.data->points.row(i);
      }
      const PointMatrix x = root_alpha * z + sd * g;
      const PointMatrix c = conditional_score(x, z, t, ScoreConvention::gamma);
      PointMatrix s, S, Sn, eps;
      if (want_score) {
        s = (*src.score)(t, x);
        if (s.rows() != M || s.cols() != dim) throw InvalidArgument("score field returned the wrong shape");
        if (!s.allFinite()) throw NumericalFailure("score field returned non-finite values");
      }
      if (want_true) S = true_diffused_score(*src.spec, t, x, ScoreConvention::gamma);
      if (want_emp) Sn = empirical_diffused_score(*src.data, t, x, ScoreConvention::gamma);
      if (want_net) eps = eps_forward(*src.net, t, x);
      for (Eigen::Index k = 0; k < K; ++k) {
        Vector v;
        switch (terms[static_cast<std::size_t>(k)]) {
          case Term::eps_s: v = (s - 2.0 * S).rowwise().squaredNorm(); break;
          case Term::risk: v = (s - 2.0 * c).rowwise().squaredNorm(); break;
          case Term::esm: v = (s - 2.0 * Sn).rowwise().squaredNorm(); break;
          case Term::c_true: v = 4.0 * (S - c).rowwise().squaredNorm(); break;
          case Term::c_emp: v = 4.0 * (c - Sn).rowwise().squaredNorm(); break;
          case Term::cond_sq: v = 4.0 * c.rowwise().squaredNorm(); break;
          case Term::true_sq: v = 4.0 * S.rowwise().squaredNorm(); break;
          case Term::emp_sq: v = 4.0 * Sn.rowwise().squaredNorm(); break;
          case Term::eps_loss: v = (eps - g).rowwise().squaredNorm(); break;
          case Term::dsm_lebesgue: {
            const double one_minus_alpha = -std::expm1(-2.0 * t);
            const PointMatrix model = (-2.0 / std::sqrt(one_minus_alpha)) * eps;
            const PointMatrix target = -2.0 * (x - root_alpha * z) / one_minus_alpha;
            v = (model - target).rowwise().squaredNorm();
            break;
          }
        }
        local.col(k) += w * v;
      }
    }
    per_atom[a] = std::move(local);
  });
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(M, K);
  for (const auto& part : per_atom) acc += part;
  if (!mc.antithetic) return acc;
  const Eigen::Index half = M / 2;
  return 0.5 * (acc.topRows(half) + acc.bottomRows(half));
}

Estimate column_estimate(const Eigen::MatrixXd& reps, Eigen::Index k) {
  const Vector col = reps.col(k);
  return estimate_from(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
}

Estimate vector_estimate(const Vector& v) {
  return estimate_from(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Estimate single_term(Side side, const Sources& src, const TimeMeasure& measure, const McConfig& mc, Term term,
                     std::uint64_t salt) {
  const Term terms[] = {term};
  return column_estimate(replicate_terms(side, src, measure, mc, terms, salt), 0);
}

// Salts keep functionals independent when common random numbers are off.
enum Salt : std::uint64_t { kEpsS = 1, kRisk, kDsm, kEsm, kCt, kChat, kTrueSq, kEmpSq, kCondSq, kEps };

}  // namespace

Estimate denoising_loss(const ScoreField& score, const Vector& z, const TimeMeasure& measure, const McConfig& mc) {
  Dataset single;
  single.points = z.transpose();
  return single_term(Side::empirical, {&score, nullptr, nullptr, &single}, measure, mc, Term::risk, kDsm);
}

Estimate empirical_dsm(const ScoreField& score, const Dataset& data, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::empirical, {&score, nullptr, nullptr, &data}, measure, mc, Term::risk, kDsm);
}

Estimate population_risk(const ScoreField& score, const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::population, {&score, nullptr, &spec, nullptr}, measure, mc, Term::risk, kRisk);
}

Estimate gen_gap(const ScoreField& score, const Dataset& data, const GmmSpec& spec, const TimeMeasure& measure,
                 const McConfig& mc) {
  const Term risk[] = {Term::risk};
  const auto pop = replicate_terms(Side::population, {&score, nullptr, &spec, nullptr}, measure, mc, risk, kRisk);
  const auto emp = replicate_terms(Side::empirical, {&score, nullptr, nullptr, &data}, measure, mc, risk, kDsm);
  return vector_estimate(pop.col(0) - emp.col(0));
}

Estimate esm_loss(const ScoreField& score, const Dataset& data, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::empirical, {&score, nullptr, nullptr, &data}, measure, mc, Term::esm, kEsm);
}

Estimate score_error(const ScoreField& score, const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::population, {&score, nullptr, &spec, nullptr}, measure, mc, Term::eps_s, kEpsS);
}

Estimate c_t(const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::population, {nullptr, nullptr, &spec, nullptr}, measure, mc, Term::c_true, kCt);
}

Estimate c_t_alternative(const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc) {
  const Term terms[] = {Term::cond_sq, Term::true_sq};
  const auto reps = replicate_terms(Side::population, {nullptr, nullptr, &spec, nullptr}, measure, mc, terms, kCondSq);
  return vector_estimate(reps.col(0) - reps.col(1));
}

Estimate c_hat(const Dataset& data, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::empirical, {nullptr, nullptr, nullptr, &data}, measure, mc, Term::c_emp, kChat);
}

DecompositionReport decompose(const ScoreField& score, const Dataset& data, const GmmSpec& spec,
                              const TimeMeasure& measure, const McConfig& mc) {
  const Sources pop_src{&score, nullptr, &spec, &data};
  const Sources emp_src{&score, nullptr, &spec, &data};
  Vector eps_s, risk, ct, dsm, esm, chat;
  if (mc.common_random_numbers) {
    const Term pop_terms[] = {Term::eps_s, Term::risk, Term::c_true};
    const Term emp_terms[] = {Term::risk, Term::esm, Term::c_emp};
    const auto pop = replicate_terms(Side::population, pop_src, measure, mc, pop_terms, 0);
    const auto emp = replicate_terms(Side::empirical, emp_src, measure, mc, emp_terms, 0);
    eps_s = pop.col(0);
    risk = pop.col(1);
    ct = pop.col(2);
    dsm = emp.col(0);
    esm = emp.col(1);
    chat = emp.col(2);
  } else {
    auto one = [&](Side side, Term term, std::uint64_t salt) -> Vector {
      const Term terms[] = {term};
      return replicate_terms(side, side == Side::population ? pop_src : emp_src, measure, mc, terms, salt).col(0);
    };
    eps_s = one(Side::population, Term::eps_s, kEpsS);
    risk = one(Side::population, Term::risk, kRisk);
    ct = one(Side::population, Term::c_true, kCt);
    dsm = one(Side::empirical, Term::risk, kDsm);
    esm = one(Side::empirical, Term::esm, kEsm);
    chat = one(Side::empirical, Term::c_emp, kChat);
  }
  DecompositionReport r;
  r.mc = mc;
  r.eps_s = vector_estimate(eps_s);
  r.population = vector_estimate(risk);
  r.dsm = vector_estimate(dsm);
  r.esm = vector_estimate(esm);
  r.c_t = vector_estimate(ct);
  r.c_hat = vector_estimate(chat);
  r.gen_gap = vector_estimate(risk - dsm);
  const Vector delta = chat - ct;
  r.delta_hat = vector_estimate(delta);
  // Same-sample arithmetic, so delta_hat equals c_hat - c_t up to rounding.
  r.delta_hat.value = r.c_hat.value - r.c_t.value;
  r.residual = vector_estimate(eps_s - (esm + (risk - dsm) + delta));
  return r;
}

void to_json(nlohmann::json& j, const DecompositionReport& r) {
  j = {{"eps_s", r.eps_s},   {"dsm", r.dsm},         {"esm", r.esm},         {"gen_gap", r.gen_gap},
       {"population_risk", r.population}, {"c_t", r.c_t}, {"c_hat", r.c_hat}, {"delta_hat", r.delta_hat},
       {"residual", r.residual}, {"mc", r.mc}};
}

Estimate epsilon_loss(const ScoreNet& net, const Dataset& data, const TimeMeasure& nu, const McConfig& mc) {
  return single_term(Side::empirical, {nullptr, &net, nullptr, &data}, nu, mc, Term::eps_loss, kEps);
}

Estimate dsm_lebesgue_loss(const ScoreNet& net, const Dataset& data, const TimeMeasure& measure, const McConfig& mc) {
  return single_term(Side::empirical, {nullptr, &net, nullptr, &data}, measure, mc, Term::dsm_lebesgue, kEps);
}

KlBoundReport kl_bound_report(double eps_s, double kl_mu_gamma, double fisher_mu_gamma, double horizon, double step) {
  KlBoundReport r;
  r.initialization = std::exp(-2.0 * horizon) * kl_mu_gamma;
  r.score = horizon * eps_s;
  r.discretization = step * fisher_mu_gamma;
  r.total = r.initialization + r.score + r.discretization;
  return r;
}

void to_json(nlohmann::json& j, const KlBoundReport& r) {
  j = {{"initialization", r.initialization},
       {"score", r.score},
       {"discretization", r.discretization},
       {"total", r.total},
       {"up_to_constant", r.up_to_constant}};
}

double delta_hat_hoeffding_term(double support_radius, std::size_t n, double delta, const TimeMeasure& measure) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (n < 1) throw InvalidArgument("n must be >= 1");
  const double decay = measure.integrate([](double t) { return std::exp(-2.0 * t); });
  return 4.0 * support_radius * support_radius * std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n))) * decay;
}

DeltaHatBoundReport delta_hat_bound_report(const Dataset& data, const GmmSpec& spec, const TimeMeasure& measure, double delta,
                             const McConfig& mc) {
  DeltaHatBoundReport r;
  r.delta = delta;
  r.support_radius = spec.support_radius();
  r.hoeffding = delta_hat_hoeffding_term(r.support_radius, static_cast<std::size_t>(data.size()), delta, measure);
  const Term pop_terms[] = {Term::c_true, Term::true_sq};
  const Term emp_terms[] = {Term::c_emp, Term::emp_sq};
  const auto pop = replicate_terms(Side::population, {nullptr, nullptr, &spec, &data}, measure, mc, pop_terms, kCt);
  const auto emp = replicate_terms(Side::empirical, {nullptr, nullptr, &spec, &data}, measure, mc, emp_terms, kChat);
  const Vector lhs = emp.col(0) - pop.col(0);
  const Vector fisher = pop.col(1) - emp.col(1);
  r.lhs = vector_estimate(lhs);
  r.fisher_term = vector_estimate(fisher);
  r.rhs = r.fisher_term;
  r.rhs.value += r.hoeffding;
  r.margin = vector_estimate(fisher - lhs);
  r.margin.value += r.hoeffding;
  return r;
}

void to_json(nlohmann::json& j, const DeltaHatBoundReport& r) {
  j = {{"lhs_delta_hat", r.lhs}, {"hoeffding", r.hoeffding}, {"fisher_term", r.fisher_term}, {"rhs", r.rhs},
       {"margin", r.margin},     {"support_radius", r.support_radius}, {"delta", r.delta},
       {"holds_3_sigma", r.holds()}};
}

double score_error_k1_sq(Eigen::Index d, double h, double support_radius) {
  const double dd = static_cast<double>(d);
  return dd / (-std::expm1(-2.0 * h)) + support_radius * support_radius + dd;
}

double score_error_k2_sq(Eigen::Index d, double h, double horizon, double support_radius) {
  const double dd = static_cast<double>(d);
  return support_radius * support_radius + dd * std::log(horizon / h) + h * dd;
}

ScoreErrorBoundReport score_error_bound_from_parts(Eigen::Index d, std::size_t n, double h, double horizon, double support_radius,
                               double delta, double fisher_mu_gamma_value, double w) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (!(h > 0.0) || !(horizon >= h)) throw InvalidArgument("score_error_bound: need 0 < h <= T");
  ScoreErrorBoundReport r;
  r.step = h;
  r.horizon = horizon;
  r.support_radius = support_radius;
  r.k1_sq = score_error_k1_sq(d, h, support_radius);
  r.k2_sq = score_error_k2_sq(d, h, horizon, support_radius);
  r.w = w;
  r.fisher_mu_gamma.value = fisher_mu_gamma_value;
  const double nn = static_cast<double>(n);
  const double log_inv = std::log(1.0 / delta);
  r.concentration = (support_radius * support_radius + r.k1_sq) * std::sqrt(log_inv / (2.0 * nn));
  r.fisher_summand = h / horizon * fisher_mu_gamma_value;
  r.tail = r.k1_sq * log_inv / nn;
  r.transport = (w * w + std::sqrt(r.k2_sq) * std::sqrt(h) * w) / (horizon * h);
  r.total = r.concentration + r.fisher_summand + r.tail + r.transport;
  return r;
}

Estimate fisher_mu_gamma(const GmmSpec& spec, std::size_t samples, std::uint64_t seed) {
  RngStream rng(seed, Purpose::mc, 0xf15be7);
  return fisher_mc([&](const PointMatrix& x) { return true_diffused_score(spec, 0.0, x, ScoreConvention::gamma); },
                   [](const PointMatrix& x) { return PointMatrix(PointMatrix::Zero(x.rows(), x.cols())); },
                   [&](std::size_t m, RngStream& r) { return sample_gmm(spec, m, r).points; }, samples, rng);
}

ScoreErrorBoundReport score_error_bound_report(const Dataset& data, const GmmSpec& spec, const NoiseSchedule& schedule, double delta,
                           const McConfig& mc, std::size_t w_samples) {
  const double horizon = schedule.horizon();
  const double h = horizon / static_cast<double>(schedule.size());
  const Estimate fisher = fisher_mu_gamma(spec, std::max<std::size_t>(mc.samples, 2), mc.seed);
  RngStream rng_true(mc.seed, Purpose::reference, 1);
  RngStream rng_emp(mc.seed, Purpose::reference, 2);
  const PointMatrix a = sample_diffused(spec, 0.5 * h, w_samples, rng_true);
  const PointMatrix b = sample_diffused(data, 0.5 * h, w_samples, rng_emp);
  const double w = w2_exact(a, b).w2;
  ScoreErrorBoundReport r = score_error_bound_from_parts(spec.dim(), static_cast<std::size_t>(data.size()), h, horizon,
                                     spec.support_radius(), delta, fisher.value, w);
  r.fisher_mu_gamma = fisher;
  r.w_samples = w_samples;
  return r;
}

void to_json(nlohmann::json& j, const ScoreErrorBoundReport& r) {
  j = {{"K1_sq", r.k1_sq},
       {"K2_sq", r.k2_sq},
       {"W", r.w},
       {"w_samples", r.w_samples},
       {"fisher_mu_gamma", r.fisher_mu_gamma},
       {"terms",
        {{"concentration", r.concentration},
         {"fisher", r.fisher_summand},
         {"tail", r.tail},
         {"transport", r.transport}}},
       {"total", r.total},
       {"h", r.step},
       {"T", r.horizon},
       {"support_radius", r.support_radius},
       {"up_to_constant", r.up_to_constant}};
}

}  // namespace sgmlab
