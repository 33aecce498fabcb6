#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace feta {

// Renyi orders the ledger tracks. Production paths use integer orders only;
// the default grid is 2..64 plus {128, 256}.
struct AlphaGrid {
  std::vector<double> orders;  // strictly increasing, every order > 1

  static AlphaGrid default_grid();
  void validate() const;
};

// One sub-sampled Gaussian mechanism: Poisson sampling rate q, noise standard
// deviation sigma in units of the mechanism's sensitivity, composed `steps`
// times. The label survives into budget-share reports.
struct SgmSpec {
  double q = 0.0;
  double sigma = 0.0;
  std::uint64_t steps = 0;
  std::string label;

  void validate() const;
};

// Accumulated Renyi divergence bound per order. Immutable value type: compose
// returns a new ledger.
struct RdpLedger {
  AlphaGrid grid;
  std::vector<double> gamma;  // same length as grid.orders, all >= 0

  static RdpLedger zero(AlphaGrid grid = AlphaGrid::default_grid());
  // All orders at +infinity; used when a stage ran with zero noise.
  static RdpLedger infinite(AlphaGrid grid = AlphaGrid::default_grid());
  bool is_infinite() const;
};

// Exact integer-order RDP of one SGM step:
//   gamma = 1/(alpha-1) * log sum_{k=0}^{alpha} C(alpha,k) (1-q)^(alpha-k) q^k
//                                               * exp(k(k-1) / (2 sigma^2)),
// evaluated in log space. This is the binomial expansion of
// D_alpha((1-q)p0 + q p1 || p0) with p0 = N(0, sigma^2), p1 = N(1, sigma^2);
// the sensitivity cancels. q = 0 gives exactly 0; q = 1 reduces to the pure
// Gaussian value alpha / (2 sigma^2).
double sgm_rdp_step(double q, double sigma, int alpha);

RdpLedger compose(const RdpLedger& ledger, const SgmSpec& spec);

struct DpPoint {
  double epsilon = 0.0;
  double alpha = 0.0;  // minimizing order
};

// epsilon = min over the grid of gamma(alpha) + ln(1/delta) / (alpha - 1).
DpPoint to_dp(const RdpLedger& ledger, double delta);

// Smallest sigma_d on a geometric grid over [0.5, 200] (then bisected to
// relative width 1e-3) such that fixed + steps_d x SGM(q_d, sigma_d) converts
// to at most target_eps. Throws CalibrationError when the fixed mechanisms
// alone cost target_eps or more, or when even sigma_d = 200 is not enough.
double calibrate_sigma_d(double target_eps, double delta,
                         const std::vector<SgmSpec>& fixed, double q_d,
                         std::uint64_t steps_d);

struct BudgetShare {
  std::string label;
  double gamma = 0.0;  // gamma at the minimizing order
  double share = 0.0;  // gamma / total, shares sum to 1
};

struct BudgetReport {
  double alpha_star = 0.0;
  double epsilon = 0.0;
  std::vector<BudgetShare> shares;
};

// Shares of the total Renyi divergence at the order minimizing the converted
// epsilon. If every mechanism costs exactly zero the shares split equally.
BudgetReport budget_ratios(const std::vector<SgmSpec>& specs, double delta);

}  // namespace feta
