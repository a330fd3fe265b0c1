#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/learner.hpp"
#include "icsmdp/observation_map.hpp"
#include "icsmdp/rng.hpp"
#include "icsmdp/smdp.hpp"

#include "json.hpp"

namespace icsmdp {

// Numerical checks of the conditions the learner's convergence analysis rests
// on: the decision-epoch chain mixes, the feature second-moment matrix has an
// eigenvalue floor, and the greedy backup contracts.  Everything here is a
// pure fold over logged data or read-only tables.

// ---------------------------------------------------------------------------
// Decision-epoch chain statistics.
//
// The chain tracked is the sequence of (observation, active agent) pairs at
// decision-epoch starts under a fixed behavior policy; episode resets are
// chain transitions like any other.
struct ChainStats {
  std::map<std::pair<int, int>, double> mu;  // (obs, agent) -> long-run frequency
  double mu_min = 0.0;                       // smallest frequency among visited states
  int t_mix = 1;                             // smallest k with worst-start TV <= eps
  double eps = 0.0;
  bool flagged = false;  // TV never reached eps within the budget (periodic or
                         // reducible chains end up here)
  std::string method = "tv-from-multiple-starts";
  long long n_epochs = 0;
};

nlohmann::json to_json(const ChainStats& stats);

struct MixingParams {
  int budget = 64;       // largest epoch count probed
  int n_starts = 10;     // distinct start states replayed (sampled if more seen)
  int n_rollouts = 256;  // independent rollouts per start
};

// Long-run frequencies from n_epochs sequential epochs, then the mixing time:
// from a spread of recorded start states, empirical k-step distributions are
// compared to mu in total variation and t_mix is the first k at accuracy eps.
// Empty policies mean uniform successor choice and the environment's internal
// action rule.
ChainStats estimate_chain_stats(Environment& env,
                                const std::vector<ObservationMap>& maps,
                                long long n_epochs, double eps, Rng& rng,
                                const MixingParams& params = {},
                                const SuccessorPolicy& successor_policy = {},
                                const LocalPolicy& local_policy = {});

// ---------------------------------------------------------------------------
// Feature second-moment spectrum: Sigma = sum_i w_i * g_i g_i^T.
struct CovarianceReport {
  Eigen::MatrixXd sigma;
  double lambda0 = 0.0;    // smallest eigenvalue above the rank threshold
  double lambda_max = 0.0;
  int rank = 0;            // eigenvalues above the threshold
  double threshold = 0.0;  // 1e-12 relative to lambda_max
};

CovarianceReport feature_covariance(
    const std::vector<std::pair<double, Eigen::VectorXd>>& weighted_features);

// ---------------------------------------------------------------------------
// Contraction margin: the largest nu in [0, 1) such that
//   (1 - nu)^2 * Sigma_mu - E_mu[gamma^(2 tau) g(s') g(s')^T]  is PSD
// where the next state s' is drawn under the greedy policy of a probe value
// vector, worst case over the probe set.  The probe set stands in for the
// full quantifier over value vectors, so the result is labeled approximate.
struct ContractionReport {
  double nu_hat = 0.0;
  bool holds = false;       // false when nu = 0 already fails for some probe
  bool approximate = true;  // probe-set stand-in for the value-vector quantifier
  int n_probes = 0;
};

ContractionReport contraction_margin(const DiscreteSmdp& smdp,
                                     const std::vector<Eigen::VectorXd>& state_features,
                                     const std::vector<double>& mu,
                                     int n_probes = 16,
                                     std::uint64_t probe_seed = 0);

// Same computation with a caller-supplied probe set (the default entry point
// builds zero, optimal-value, and seeded random probes and forwards here).
ContractionReport contraction_margin_with_probes(
    const DiscreteSmdp& smdp, const std::vector<Eigen::VectorXd>& state_features,
    const std::vector<double>& mu, const std::vector<std::vector<double>>& probes);

// ---------------------------------------------------------------------------
// Policy value gap: reference value minus the greedy policy's mean discounted
// return over n_eval episodes (>= 0 up to evaluation noise when the reference
// is at least as good as the learned policy).
double value_gap(IcqTrainer& trainer, double reference_value, int n_eval,
                 std::uint64_t eval_seed);

// ---------------------------------------------------------------------------
// Correlation statistics.  Both throw std::domain_error on length mismatch,
// fewer than two points, or zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// ---------------------------------------------------------------------------
// Finite-time error decomposition.  Constants c0 and c1 are inputs, never
// estimated; a missing input leaves the affected term symbolic rather than
// silently zero, so scans can check shapes without fabricating magnitudes.
struct BoundInputs {
  std::optional<double> alpha_q;    // composite abstraction quality
  std::optional<double> eps_app;    // function-class approximation error
  std::optional<double> eps_0;      // linearization error scale
  std::optional<double> lambda_max; // top feature-covariance eigenvalue
  std::optional<double> c0;
  std::optional<double> c1;
  std::optional<double> t_mix;
  std::optional<double> horizon_t;  // number of learning updates T
};

struct BoundTerm {
  std::optional<double> value;  // empty => symbolic
  std::string expr;
  bool symbolic() const { return !value.has_value(); }
};

struct TheoryReport {
  double lambda0 = 0.0;
  double lambda_max = 0.0;
  std::optional<double> nu_hat;  // empty when the contraction condition fails
  bool contraction_holds = false;
  double gamma_bar_hat = 0.0;
  double r_max = 0.0;
  BoundTerm representation_term;  // 2 * alpha_q^2
  BoundTerm approximation_term;   // 6 eps_app + 6 eps_0 + 6 lambda_max c1 eps_0
  BoundTerm mixing_term;          // 6 lambda_max c0 (1 + t_mix)(1 + log(T+1)) / T
  std::optional<double> total() const;
};

nlohmann::json to_json(const TheoryReport& report);

// Fills the three terms from the inputs; spectrum and margin fields are left
// for the caller to populate from CovarianceReport / ContractionReport.
TheoryReport evaluate_bound_terms(const BoundInputs& in);

}  // namespace icsmdp
