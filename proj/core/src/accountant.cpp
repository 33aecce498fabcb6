#include "feta/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "feta/errors.hpp"

namespace feta {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& terms) {
  double m = -kInf;
  for (double t : terms) m = std::max(m, t);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

int order_as_int(double alpha) {
  const double r = std::round(alpha);
  if (!(alpha > 1.0) || std::abs(alpha - r) > 1e-9)
    throw std::invalid_argument("accountant: orders must be integers >= 2");
  return static_cast<int>(r);
}

}  // namespace

AlphaGrid AlphaGrid::default_grid() {
  AlphaGrid g;
  for (int a = 2; a <= 64; ++a) g.orders.push_back(a);
  g.orders.push_back(128);
  g.orders.push_back(256);
  return g;
}

void AlphaGrid::validate() const {
  if (orders.empty()) throw std::invalid_argument("alpha grid is empty");
  double prev = 1.0;
  for (double a : orders) {
    if (!(a > prev)) throw std::invalid_argument("alpha grid must be strictly increasing and > 1");
    prev = a;
  }
}

void SgmSpec::validate() const {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("SgmSpec: q must be in [0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("SgmSpec: sigma must be positive and finite");
}

RdpLedger RdpLedger::zero(AlphaGrid grid) {
  grid.validate();
  RdpLedger l;
  l.gamma.assign(grid.orders.size(), 0.0);
  l.grid = std::move(grid);
  return l;
}

RdpLedger RdpLedger::infinite(AlphaGrid grid) {
  RdpLedger l = zero(std::move(grid));
  for (auto& g : l.gamma) g = kInf;
  return l;
}

bool RdpLedger::is_infinite() const {
  for (double g : gamma)
    if (std::isinf(g)) return true;
  return false;
}

double sgm_rdp_step(double q, double sigma, int alpha) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("sgm_rdp_step: q must be in [0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("sgm_rdp_step: sigma must be positive and finite");
  if (alpha < 2) throw std::invalid_argument("sgm_rdp_step: alpha must be an integer >= 2");
  if (q == 0.0) return 0.0;  // the mechanism never touches the data
  const double s2 = 2.0 * sigma * sigma;
  if (q == 1.0) return alpha / s2;

  std::vector<double> terms;
  terms.reserve(alpha + 1);
  const double lq = std::log(q);
  const double l1q = std::log1p(-q);
  for (int k = 0; k <= alpha; ++k) {
    const double t = log_binom(alpha, k) + (alpha - k) * l1q + k * lq +
                     k * (k - 1.0) / s2;
    terms.push_back(t);
  }
  const double lse = log_sum_exp(terms);
  if (!std::isfinite(lse))
    throw AccountingRangeError("sgm_rdp_step: overflow in log-space evaluation");
  // The sum is >= 1 (binomial weights sum to 1, every exp factor >= 1), so the
  // result is nonnegative up to rounding.
  return std::max(0.0, lse / (alpha - 1.0));
}

RdpLedger compose(const RdpLedger& ledger, const SgmSpec& spec) {
  spec.validate();
  RdpLedger out = ledger;
  if (spec.steps == 0) return out;
  for (std::size_t i = 0; i < out.grid.orders.size(); ++i) {
    const int a = order_as_int(out.grid.orders[i]);
    const double g = sgm_rdp_step(spec.q, spec.sigma, a);
    // accumulate step by step so composing k at once is bit-identical to
    // composing one step k times
    for (std::uint64_t s = 0; s < spec.steps; ++s) out.gamma[i] += g;
  }
  return out;
}

DpPoint to_dp(const RdpLedger& ledger, double delta) {
  ledger.grid.validate();
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("to_dp: delta must be in (0, 1)");
  DpPoint best{kInf, 0.0};
  const double ln_inv_delta = std::log(1.0 / delta);
  for (std::size_t i = 0; i < ledger.grid.orders.size(); ++i) {
    const double a = ledger.grid.orders[i];
    const double eps = ledger.gamma[i] + ln_inv_delta / (a - 1.0);
    if (eps < best.epsilon) best = DpPoint{eps, a};
  }
  return best;
}

double calibrate_sigma_d(double target_eps, double delta,
                         const std::vector<SgmSpec>& fixed, double q_d,
                         std::uint64_t steps_d) {
  if (!(target_eps > 0.0)) throw std::invalid_argument("calibrate_sigma_d: target_eps must be > 0");
  if (!(q_d > 0.0 && q_d <= 1.0))
    throw std::invalid_argument("calibrate_sigma_d: q_d must be in (0, 1]");
  if (steps_d == 0) throw std::invalid_argument("calibrate_sigma_d: steps_d must be >= 1");

  RdpLedger base = RdpLedger::zero();
  for (const auto& s : fixed) base = compose(base, s);
  const double fixed_eps = to_dp(base, delta).epsilon;
  if (fixed_eps >= target_eps)
    throw CalibrationError(
        "calibrate_sigma_d: fixed mechanisms alone cost epsilon >= target "
        "(over-allocation to feature queries)");

  const auto eps_at = [&](double sigma_d) {
    return to_dp(compose(base, SgmSpec{q_d, sigma_d, steps_d, "dpsgd"}), delta).epsilon;
  };

  // Geometric scan over [0.5, 200]; epsilon is nonincreasing in sigma_d, so
  // the first feasible point brackets the answer.
  constexpr double kLo = 0.5;
  constexpr double kHi = 200.0;
  constexpr int kScan = 96;
  double lo = kLo;
  double hi = -1.0;
  if (eps_at(kLo) <= target_eps) return kLo;
  for (int i = 1; i <= kScan; ++i) {
    const double s = kLo * std::pow(kHi / kLo, static_cast<double>(i) / kScan);
    if (eps_at(s) <= target_eps) {
      hi = s;
      break;
    }
    lo = s;
  }
  if (hi < 0.0)
    throw CalibrationError(
        "calibrate_sigma_d: no sigma_d <= 200 reaches the target epsilon");
  while ((hi - lo) / hi > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= target_eps)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

BudgetReport budget_ratios(const std::vector<SgmSpec>& specs, double delta) {
  if (specs.empty()) throw std::invalid_argument("budget_ratios: need at least one spec");
  RdpLedger total = RdpLedger::zero();
  std::vector<RdpLedger> each;
  each.reserve(specs.size());
  for (const auto& s : specs) {
    RdpLedger l = compose(RdpLedger::zero(), s);
    total = compose(total, s);
    each.push_back(std::move(l));
  }
  const DpPoint pt = to_dp(total, delta);
  std::size_t idx = 0;
  while (total.grid.orders[idx] != pt.alpha) ++idx;

  BudgetReport report;
  report.alpha_star = pt.alpha;
  report.epsilon = pt.epsilon;
  const double tot = total.gamma[idx];
  for (std::size_t i = 0; i < specs.size(); ++i) {
    BudgetShare bs;
    bs.label = specs[i].label;
    bs.gamma = each[i].gamma[idx];
    bs.share = tot > 0.0 ? bs.gamma / tot : 1.0 / static_cast<double>(specs.size());
    report.shares.push_back(std::move(bs));
  }
  return report;
}

}  // namespace feta
