#pragma once
// Regime-switching diffusion models: coefficient families, state-dependent
// transition rates with analytic bounds, and assumption verification.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rsdp/types.hpp"

namespace rsdp {

// One off-diagonal rate q_ij.  Families:
//   Constant: q_ij(x) = value
//   Tanh:     q_ij(x) = clamp(base + amp * tanh(<dir, x>), 0, cap)
//   Programmatic: arbitrary callable; bounds are grid-estimated and widened
//   by the safety factor instead of being exact.
struct RatePair {
  enum class Kind { Constant, Tanh, Programmatic };
  int from = 0, to = 0;  // 1-based regimes, from != to
  Kind kind = Kind::Constant;
  double value = 0.0;                          // Constant
  double base = 0.0, amp = 0.0, cap = 1e300;   // Tanh
  Vec dir;                                     // Tanh direction (size n)
  std::function<double(const Vec&)> fn;        // Programmatic

  double eval(const Vec& x) const;
};

struct PairBounds {
  int from = 0, to = 0;
  double sup = 0.0, inf = 0.0;  // over R^n (exact for analytic families)
  double lip = 0.0;             // pairwise Lipschitz constant
  bool exact = true;            // false when grid-estimated
};

class RateFunction {
 public:
  RateFunction() = default;
  RateFunction(int N, int n, std::vector<RatePair> pairs);

  // Computes per-pair sup/inf/Lipschitz bounds, H, M, and the birth-death
  // flag.  Programmatic pairs are sampled on `grid` and widened by `safety`.
  void finalize(const GridSpec& grid = {}, double safety = 1.1);

  int N() const { return N_; }
  int dim() const { return n_; }
  double eval(const Vec& x, int i, int j) const;  // q_ij(x), i != j
  double exit_rate(const Vec& x, int i) const;    // q_i(x) = sum_{j != i} q_ij(x)
  double H() const { return H_; }
  double M() const { return M_; }
  double cq() const { return cq_; }
  bool birth_death() const { return birth_death_; }
  bool state_dependent() const;  // any non-constant pair
  const std::vector<RatePair>& pairs() const { return pairs_; }
  const PairBounds& bounds(int i, int j) const;
  bool has_pair(int i, int j) const;

 private:
  int N_ = 1, n_ = 1;
  std::vector<RatePair> pairs_;
  std::vector<int> pair_index_;  // (i-1)*N + (j-1) -> index into pairs_, -1 if absent
  std::vector<PairBounds> bounds_;
  double H_ = 0.0, M_ = 0.0, cq_ = 0.0;
  bool birth_death_ = true;
  bool finalized_ = false;
};

// Drift b(x,i) = A x + c - cubic * |x|^2 x.  The cubic term gives strong
// dissipativity with closed-form constants (see valid_strong_constants).
struct DriftSpec {
  Mat A;
  Vec c;
  double cubic = 0.0;  // >= 0
};

struct StrongDissipation {  // declared constants for the one-regime condition
  int i0 = 1;
  double beta = 0.0, C3 = 0.0, p = 0.0;
};

struct DeclaredConstants {
  std::optional<std::vector<double>> alpha;  // per-regime dissipativity rates
  std::optional<double> C1;                  // uniform coefficient bound
  bool C1_box_scope = false;                 // C1 claimed on the grid box only
  std::optional<double> C2;                  // ellipticity floor
  std::optional<StrongDissipation> strong;
  std::optional<double> C4;                  // drift Lipschitz constant
};

struct Model {
  int n = 1;
  int N = 1;
  std::vector<DriftSpec> drift;  // size N
  std::vector<Mat> sigma;        // size 1 (shared across regimes) or N
  RateFunction rates;
  DeclaredConstants constants;

  const Mat& sigma_of(int i) const { return sigma.size() == 1 ? sigma[0] : sigma[i - 1]; }
  bool sigma_shared() const;  // true iff sigma(x,i) is one constant matrix
  void drift_eval(const Vec& x, int i, Vec& out) const;
  double M() const { return rates.M(); }

  // Closed-form per-regime dissipativity rate lambda_max(A_i + A_i^T); the
  // cubic term only helps, so this value is always admissible.
  double alpha_analytic(int i) const;
  // Admissible strong-dissipation constants for regime i0 when cubic > 0:
  // beta = lambda_max((A+A^T)/2), C3 = cubic/4, p = 4.
  std::optional<StrongDissipation> strong_analytic(int i0) const;
};

struct Verdict {
  std::string name;      // Q1, Q2, Q3, A1, A2, A3, A4, H1, H2, m1
  bool applicable = false;  // declared / checkable for this model
  bool pass = false;
  std::string method;    // "analytic" or "grid"
  std::string detail;    // evidence values, human-readable
  std::string witness;   // violating input, when found
};

struct AssumptionReport {
  std::vector<Verdict> verdicts;
  const Verdict* find(const std::string& name) const;
  bool all_applicable_pass() const;
};

struct BirthDeathCheck {
  bool is_birth_death = false;
  bool m1_holds = false;      // pair-sum conditions (two-state: single pair)
  std::string detail;
  std::string witness;        // x violating a pair-sum condition, if any
};

struct RateSummary {
  std::vector<PairBounds> pairs;
  double H = 0.0, M = 0.0;
};

// Range of q_{i,i+1}(x) + q_{i+1,i}(x) over x, analytic when the family allows
// (cancelling tanh pairs, constants), grid-estimated otherwise.
struct PairSumInfo {
  bool constant = false;   // lo == hi up to tolerance
  bool analytic = false;
  double lo = 0.0, hi = 0.0;
  std::string witness_min, witness_max;  // sample points attaining lo / hi
};
PairSumInfo pair_sum_info(const Model& model, int i, const GridSpec& grid = {});

AssumptionReport validate_model(const Model& model, const GridSpec& grid = {});
RateSummary rate_bounds(const Model& model);
BirthDeathCheck check_birth_death(const Model& model);

// Model config (de)serialization; round-trippable JSON documents.
Model model_from_json(const std::string& text);
std::string model_to_json(const Model& model);
Model load_model_file(const std::string& path);

}  // namespace rsdp
