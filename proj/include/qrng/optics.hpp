// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <istream>
#include <map>
#include <utility>
#include <variant>
#include <vector>

#include "qrng/random.hpp"

namespace qrng {

/// Jones vector of a prepared polarisation qubit.
struct PolarizationState {
    std::complex<double> amplitude_h;
    std::complex<double> amplitude_v;

    double norm_squared() const { return std::norm(amplitude_h) + std::norm(amplitude_v); }
    /// |<H|psi>|^2
    double prob_h() const { return std::norm(amplitude_h); }
};

/// State index 0 -> |H>, 1 -> |V>, 2 -> |R> = (|H> + i|V>)/sqrt(2).
PolarizationState prepare_state(int choice);

struct DegradationPoint {
    double day;
    double multiplier;
};

struct SourceConfig {
    double mean_photon_number = 0.075;  // per detection window at full brightness
    double center_wavelength = 804.0;   // nm
    double fwhm = 41.6;                 // nm
    double window = 1.4e-9;             // s
    double nominal_flux = 0.075 / 1.4e-9;  // photons/s into the measurement box
    /// Piecewise-linear flux multiplier vs elapsed days; held constant outside the table.
    std::vector<DegradationPoint> degradation_curve{{0.0, 1.0}, {8.0, 1.0}, {22.0, 0.55}};

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

struct MeasurementBoxConfig {
    double detector_efficiency = 0.25;
    double dark_count_prob = 1e-6;     // per window per detector
    double pbs_transmission_h = 0.975; // H photon exits towards D1
    double pbs_transmission_v = 0.965; // V photon exits towards D2

    void validate() const;

    static MeasurementBoxConfig ideal() { return {1.0, 0.0, 1.0, 1.0}; }
};

enum class DiscardReason : std::uint8_t { NoClick, DoubleClick };

struct Bit {
    std::uint8_t value;
    friend bool operator==(Bit, Bit) = default;
};
struct Discard {
    DiscardReason reason;
    friend bool operator==(Discard, Discard) = default;
};
using DetectionEvent = std::variant<Bit, Discard>;

inline bool is_bit(const DetectionEvent& e) { return std::holds_alternative<Bit>(e); }

/// Probability of P_n for a Poisson distribution, evaluated in log space.
double poisson_pmf(std::int64_t n, double mean);

std::uint64_t sample_photon_count(double mean, Rng& rng);

/// Flux multiplier of the degradation table at `day`.
double degradation_multiplier(const SourceConfig& source, double day);
double source_flux(double day, const SourceConfig& source);
/// Mean photon number per window after degradation.
double effective_mean(const SourceConfig& source, double day);

/// Photon-level simulation of one detection window: Poisson emission, PBS
/// routing, detector efficiency and dark counts.
DetectionEvent simulate_round(const PolarizationState& state, const MeasurementBoxConfig& box,
                              const SourceConfig& source, Rng& rng, double day = 0.0);

/// Exact outcome distribution of one window under the simulate_round model.
struct OutcomeProbabilities {
    double bit0;
    double bit1;
    double no_click;
    double double_click;
};
OutcomeProbabilities outcome_probabilities(const PolarizationState& state,
                                           const MeasurementBoxConfig& box, double mean);

/// Draws rounds from the exact outcome distribution, skipping runs of
/// NoClick windows geometrically. Equivalent in law to repeated
/// simulate_round calls, but costs O(1) per non-empty window.
class OutcomeSampler {
  public:
    OutcomeSampler(const PolarizationState& state, const MeasurementBoxConfig& box, double mean);

    struct Draw {
        std::uint64_t no_clicks;  // NoClick windows preceding `event`
        DetectionEvent event;     // Bit or DoubleClick
    };
    Draw next(Rng& rng) const;

    enum class Outcome : std::uint8_t { Bit0, Bit1, DoubleClick, NoClick };
    struct FastDraw {
        std::uint64_t no_clicks;
        Outcome outcome;  // NoClick only when no window can ever click
    };
    /// Same draws as next() without building a DetectionEvent.
    FastDraw next_fast(Rng& rng) const;

    const OutcomeProbabilities& probabilities() const { return probs_; }

  private:
    OutcomeProbabilities probs_;
    double p_event_;
    double log_silent_;  // log(1 - p_event_)
    double p_bit0_given_event_;
    double p_bit1_given_event_;
};

struct PoissonFit {
    double mean;
    double chi_square;
    int degrees_of_freedom;
    double p_value;
};

/// Maximum-likelihood Poisson fit with a chi-square goodness-of-fit test.
/// Bins are pooled left to right until each holds an expected count >= 5;
/// the last bin absorbs the upper tail.
PoissonFit fit_poisson(const std::map<std::uint64_t, std::uint64_t>& histogram);

/// Sampled optical spectrum phi(lambda), lambda in nm, phi in W/nm.
struct Spectrum {
    std::vector<double> wavelength_nm;
    std::vector<double> power_w_per_nm;
};

/// Two-column text: wavelength (nm) and spectral power (W/nm); '#' starts a comment.
Spectrum read_spectrum(std::istream& in);

/// External quantum efficiency from a spectrum, current density (A/cm^2) and area (cm^2).
double compute_eqe(const Spectrum& spectrum, double current_density, double area_cm2);
/// Radiance in W m^-2 sr^-1 for a Lambertian emitter of area `area_cm2`.
double compute_radiance(const Spectrum& spectrum, double area_cm2);

}  // namespace qrng
