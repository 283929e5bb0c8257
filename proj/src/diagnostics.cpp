#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mebart/sampler.hpp"

namespace mebart {

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw std::invalid_argument("psr: no chains");
  const std::size_t m = chains.size();
  std::vector<double> means(m);
  double within = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    if (chains[c].size() < 2) throw std::invalid_argument("psr: chains need at least two draws");
    means[c] = mean_of(chains[c]);
    double ss = 0.0;
    for (double x : chains[c]) ss += (x - means[c]) * (x - means[c]);
    within += ss / static_cast<double>(chains[c].size());
  }
  within /= static_cast<double>(m);
  const double grand = mean_of(means);
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between /= static_cast<double>(m);
  if (between == 0.0) return 1.0;
  if (within == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt((within + between) / within);
}

double split_potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return potential_scale_reduction(halves);
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mu = mean_of(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  c0 /= static_cast<double>(n);
  if (c0 == 0.0) return static_cast<double>(n);
  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mu) * (x[t + lag] - mu);
    return s / static_cast<double>(n) / c0;
  };
  // Sum adjacent-pair autocorrelations while positive, forcing the pair sums
  // to be non-increasing.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double gamma = rho(2 * k) + rho(2 * k + 1);
    if (gamma <= 0.0) break;
    gamma = std::min(gamma, prev);
    prev = gamma;
    tau += 2.0 * gamma;
  }
  return static_cast<double>(n) / std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
}

DiagnosticsReport diagnostics(const PosteriorDraws& draws) {
  if (draws.n_keep < 10) throw std::invalid_argument("diagnostics: need at least 10 kept draws per chain");
  DiagnosticsReport rep;
  rep.burn_in = draws.n_burn;
  rep.has_sigma = draws.response == ResponseKind::continuous && !draws.sigma.empty();
  if (rep.has_sigma) {
    const auto keep = static_cast<std::size_t>(draws.n_keep);
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < draws.n_chains; ++c) {
      const auto begin = draws.sigma.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * keep);
      chains.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(keep));
      rep.chain_means.push_back(mean_of(chains.back()));
    }
    rep.psr = potential_scale_reduction(chains);
    rep.split_psr = split_potential_scale_reduction(chains);
    for (const auto& c : chains) rep.ess += effective_sample_size(c);
  }
  if (!draws.proposed.empty() && draws.model == ModelKind::mebart) {
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < draws.proposed.size(); ++i) {
      const double r = draws.proposed[i] == 0 ? 0.0 : static_cast<double>(draws.accepted[i]) / static_cast<double>(draws.proposed[i]);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      sum += r;
    }
    rep.acceptance_mean = sum / static_cast<double>(draws.proposed.size());
    rep.acceptance_min = lo;
    rep.acceptance_max = hi;
  }
  return rep;
}

}  // namespace mebart
