#include "sssd/s4.hpp"

#include "sssd/fft.hpp"

namespace sssd::s4 {

Eigen::VectorXd apply_convolutional(std::span<const double> kernel, std::span<const double> u, double feedthrough) {
  if (kernel.size() != u.size()) {
    throw DimensionError("apply_convolutional: kernel length " + std::to_string(kernel.size()) +
                         " differs from input length " + std::to_string(u.size()));
  }
  const Index length = static_cast<Index>(u.size());
  const Index padded = fft::next_power_of_two(2 * length);
  const auto& plan = fft::plan(padded);
  std::vector<double> ku(static_cast<std::size_t>(padded), 0.0);
  std::vector<double> uu(static_cast<std::size_t>(padded), 0.0);
  std::copy(kernel.begin(), kernel.end(), ku.begin());
  std::copy(u.begin(), u.end(), uu.begin());
  std::vector<fft::Complex> ks(static_cast<std::size_t>(plan.bins()));
  std::vector<fft::Complex> us(static_cast<std::size_t>(plan.bins()));
  plan.forward(ku.data(), ks.data());
  plan.forward(uu.data(), us.data());
  for (std::size_t f = 0; f < ks.size(); ++f) us[f] *= ks[f];
  plan.inverse(us.data(), uu.data());
  Eigen::VectorXd y(length);
  for (Index t = 0; t < length; ++t) y[t] = uu[static_cast<std::size_t>(t)] + feedthrough * u[static_cast<std::size_t>(t)];
  return y;
}

}  // namespace sssd::s4
