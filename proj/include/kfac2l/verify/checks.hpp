#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kfac2l::verify {

/// Outcome of one oracle-equivalence sweep: worst error over all cases.
struct CheckResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;
  double tolerance = 0.0;
  int cases = 0;
  double seconds = 0.0;
};

/// fisher_matvec vs explicit F. u, relative error, p <= 200.
CheckResult check_fisher_matvec(std::uint64_t seed, int nets = 20);
/// coarse_operator vs R0 (F + lambda I) R0^T for every coarse space, p <= 200.
CheckResult check_coarse_operator(std::uint64_t seed, int nets = 20);
/// kfac_apply_inverse vs explicit damped Kronecker block solve, p <= 200.
CheckResult check_kfac_inverse(std::uint64_t seed, int nets = 20);
/** I - F2L^-1 F. = (I - R0^T Fc^-1 R0 F.)(I - F_KFAC^-1 F.) with F2L^-1 read
 *  column by column off the library pipeline, absolute Frobenius, p <= 100. */
CheckResult check_multiplicative(std::uint64_t seed, int nets = 10);
/// Full-space coarse correction vs the explicit regularized NGD solve, p <= 100.
CheckResult check_full_space(std::uint64_t seed, int nets = 10);
/// backward vs central differences, tanh/sigmoid, p <= 50.
CheckResult check_gradient(std::uint64_t seed, int nets = 10);

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed);

std::string format(const CheckResult& result);

}  // namespace kfac2l::verify
