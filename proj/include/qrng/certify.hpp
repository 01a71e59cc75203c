// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string_view>

namespace qrng {

enum class CertificationMethod { NumericProgram, Oracle };
std::string_view to_string(CertificationMethod method);

struct Certificate {
    double p_suc_h = 0.0;
    double p_suc_v = 0.0;
    double guessing_probability = 1.0;
    double min_entropy_per_bit = 0.0;  // floored to kMinEntropyGranularity
    CertificationMethod method = CertificationMethod::NumericProgram;
};

inline constexpr double kGuessingTolerance = 1e-6;
inline constexpr double kMinEntropyGranularity = 1e-4;

class InfeasibleError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Maximal probability that an adversary controlling the measurement device
/// (and possibly entangled with it) guesses the outcome on |R>, given the
/// observed test successes p(0|H) = p_suc_h and p(1|V) = p_suc_v.
///
/// The adversary's strategy is a decomposition of the device into qubit
/// POVMs labelled by her guess. Two-outcome qubit POVMs are mixtures of
/// projective measurements and the two constant-output strategies, and the
/// guess value of a projective measurement with test success c is
/// 1/2 + sqrt(c(1 - c)). Mixing several projective measurements never helps
/// (concavity), so the program reduces to one concave maximisation over
/// the weight t carried by the projective part, solved by golden section.
double guessing_probability(double p_suc_h, double p_suc_v);

/// -log2(p_g)
double min_entropy(double p_g);

/// Brute-force lower bound on guessing_probability: linear programme over
/// mixtures of constant-output strategies and projective measurements whose
/// Bloch vectors lie on a resolution x resolution grid of the sphere.
double oracle_guessing_probability(double p_suc_h, double p_suc_v, int grid_resolution = 256);

/// Certificate for the given test successes. H_min is rounded down.
Certificate certify(double p_suc_h, double p_suc_v,
                    CertificationMethod method = CertificationMethod::NumericProgram);

}  // namespace qrng
