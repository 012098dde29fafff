#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qmamba::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Measured quantity (error, ratio, variance ...) and the bound it is held to.
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  /// Test fixture: negate Bbar before the scan under test, so the oracle
  /// comparisons must fail.
  bool inject_bbar_sign_flip = false;
};

// ssm
CheckResult check_zoh_example();
CheckResult check_zoh_small_delta();
CheckResult check_scan_hand_unroll(const CheckOptions& opt = {});
CheckResult check_scan_oracle(std::size_t draws, const CheckOptions& opt = {});
CheckResult check_causality(const CheckOptions& opt = {});
CheckResult check_stability_bound(const CheckOptions& opt = {});
CheckResult check_decay_monotone();

// grad
CheckResult check_backward_fd(std::size_t cases, const CheckOptions& opt = {});
CheckResult check_backward_recompute(const CheckOptions& opt = {});

// adaup (and the convolutions it is built on)
CheckResult check_conv_oracle(const CheckOptions& opt = {});
CheckResult check_conv_adjoint(std::size_t draws, const CheckOptions& opt = {});
CheckResult check_adaup_identity(const CheckOptions& opt = {});
CheckResult check_adaup_stage_composition(const CheckOptions& opt = {});
CheckResult check_adaup_shapes();
CheckResult check_adaup_linearity(const CheckOptions& opt = {});

// qssm
CheckResult check_qssm_residual_identity(const CheckOptions& opt = {});
CheckResult check_qssm_direction_symmetry(const CheckOptions& opt = {});
CheckResult check_qssm_direction_sum(const CheckOptions& opt = {});
CheckResult check_qssm_closed_form(const CheckOptions& opt = {});
CheckResult check_noise_averaging(const CheckOptions& opt = {});
CheckResult check_query_gating(const CheckOptions& opt = {});

// msfm
CheckResult check_msfm_conv_gate(const CheckOptions& opt = {});
CheckResult check_msfm_recomposition(const CheckOptions& opt = {});
CheckResult check_msfm_homogeneity(const CheckOptions& opt = {});
CheckResult check_msfm_ssm_closed_form(const CheckOptions& opt = {});
CheckResult check_msfm_transformer_oracle(const CheckOptions& opt = {});

inline constexpr std::string_view kSuiteNames[] = {"ssm", "qssm", "adaup", "msfm", "grad", "all"};

/// Runs a named suite; throws kValidation on an unknown name.
std::vector<CheckResult> run_suite(std::string_view suite, const CheckOptions& opt = {});

/// "PASS ssm.scan_oracle value=1.2e-15 tol=1e-10 (detail)"
std::string format_result(const CheckResult& r);

}  // namespace qmamba::verify
