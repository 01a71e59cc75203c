// SPDX-License-Identifier: Apache-2.0
#include "qrng/optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace qrng {

namespace {

constexpr double kPlanck = 6.62607015e-34;        // J s
constexpr double kLightSpeed = 299792458.0;        // m/s
constexpr double kElementaryCharge = 1.602176634e-19;  // C

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

void check_spectrum(const Spectrum& s) {
    if (s.wavelength_nm.size() != s.power_w_per_nm.size()) {
        throw std::invalid_argument("spectrum: column length mismatch");
    }
    if (s.wavelength_nm.size() < 2) {
        throw std::invalid_argument("spectrum: need at least two samples");
    }
    for (std::size_t i = 1; i < s.wavelength_nm.size(); ++i) {
        if (!(s.wavelength_nm[i] > s.wavelength_nm[i - 1])) {
            throw std::invalid_argument("spectrum: wavelength grid must be strictly increasing");
        }
    }
}

template <class F>
double trapezoid(const Spectrum& s, F&& integrand) {
    double total = 0.0;
    for (std::size_t i = 1; i < s.wavelength_nm.size(); ++i) {
        const double a = integrand(s.wavelength_nm[i - 1], s.power_w_per_nm[i - 1]);
        const double b = integrand(s.wavelength_nm[i], s.power_w_per_nm[i]);
        total += 0.5 * (a + b) * (s.wavelength_nm[i] - s.wavelength_nm[i - 1]);
    }
    return total;
}

}  // namespace

PolarizationState prepare_state(int choice) {
    using namespace std::complex_literals;
    switch (choice) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {(std::numbers::sqrt2 / 2.0), 1i * (std::numbers::sqrt2 / 2.0)};
        default:
            throw std::invalid_argument("prepare_state: state index must be 0, 1 or 2, got " +
                                        std::to_string(choice));
    }
}

void SourceConfig::validate() const {
    if (!(mean_photon_number > 0.0)) throw std::invalid_argument("source: mean_photon_number must be > 0");
    if (!(window > 0.0)) throw std::invalid_argument("source: window must be > 0");
    if (!(nominal_flux >= 0.0)) throw std::invalid_argument("source: nominal_flux must be >= 0");
    if (degradation_curve.empty()) throw std::invalid_argument("source: degradation_curve is empty");
    for (std::size_t i = 0; i < degradation_curve.size(); ++i) {
        const auto& p = degradation_curve[i];
        if (!(p.multiplier > 0.0 && p.multiplier <= 1.0)) {
            throw std::invalid_argument("source: degradation multiplier must lie in (0, 1]");
        }
        if (i > 0) {
            const auto& prev = degradation_curve[i - 1];
            if (!(p.day > prev.day)) throw std::invalid_argument("source: degradation days must increase");
            if (p.multiplier > prev.multiplier) {
                throw std::invalid_argument("source: degradation multiplier must be non-increasing");
            }
        }
    }
}

void MeasurementBoxConfig::validate() const {
    if (!in_unit_interval(detector_efficiency) || !in_unit_interval(dark_count_prob) ||
        !in_unit_interval(pbs_transmission_h) || !in_unit_interval(pbs_transmission_v)) {
        throw std::invalid_argument("measurement box: all probabilities must lie in [0, 1]");
    }
}

double poisson_pmf(std::int64_t n, double mean) {
    if (n < 0 || !(mean >= 0.0)) throw std::invalid_argument("poisson_pmf: negative argument");
    if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
    const double k = static_cast<double>(n);
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

std::uint64_t sample_photon_count(double mean, Rng& rng) { return rng.poisson(mean); }

double degradation_multiplier(const SourceConfig& source, double day) {
    const auto& c = source.degradation_curve;
    if (c.empty()) return 1.0;
    if (day <= c.front().day) return c.front().multiplier;
    if (day >= c.back().day) return c.back().multiplier;
    auto hi = std::upper_bound(c.begin(), c.end(), day,
                               [](double d, const DegradationPoint& p) { return d < p.day; });
    auto lo = hi - 1;
    const double t = (day - lo->day) / (hi->day - lo->day);
    return lo->multiplier + t * (hi->multiplier - lo->multiplier);
}

double source_flux(double day, const SourceConfig& source) {
    if (day < 0.0) throw std::invalid_argument("source_flux: elapsed time must be >= 0");
    return source.nominal_flux * degradation_multiplier(source, day);
}

double effective_mean(const SourceConfig& source, double day) {
    return source.mean_photon_number * degradation_multiplier(source, day);
}

namespace {

// Probability that a single photon in `state` leaves the PBS towards D1.
double route_to_d1(const PolarizationState& state, const MeasurementBoxConfig& box) {
    const double ph = state.prob_h();
    return ph * box.pbs_transmission_h + (1.0 - ph) * (1.0 - box.pbs_transmission_v);
}

}  // namespace

DetectionEvent simulate_round(const PolarizationState& state, const MeasurementBoxConfig& box,
                              const SourceConfig& source, Rng& rng, double day) {
    const std::uint64_t photons = rng.poisson(effective_mean(source, day));
    const double to_d1 = route_to_d1(state, box);
    bool d1 = false;
    bool d2 = false;
    for (std::uint64_t k = 0; k < photons; ++k) {
        const bool first = rng.bernoulli(to_d1);
        if (rng.bernoulli(box.detector_efficiency)) (first ? d1 : d2) = true;
    }
    if (rng.bernoulli(box.dark_count_prob)) d1 = true;
    if (rng.bernoulli(box.dark_count_prob)) d2 = true;
    if (d1 && d2) return Discard{DiscardReason::DoubleClick};
    if (d1) return Bit{0};
    if (d2) return Bit{1};
    return Discard{DiscardReason::NoClick};
}

OutcomeProbabilities outcome_probabilities(const PolarizationState& state,
                                           const MeasurementBoxConfig& box, double mean) {
    // Poisson thinning: detected photons at D1 and D2 are independent Poisson variables.
    const double to_d1 = route_to_d1(state, box);
    const double rate1 = mean * box.detector_efficiency * to_d1;
    const double rate2 = mean * box.detector_efficiency * (1.0 - to_d1);
    const double silent1 = std::exp(-rate1) * (1.0 - box.dark_count_prob);
    const double silent2 = std::exp(-rate2) * (1.0 - box.dark_count_prob);
    // 1 - e^{-r}(1-d) without cancellation for small r and d
    const double click1 = -std::expm1(-rate1) + std::exp(-rate1) * box.dark_count_prob;
    const double click2 = -std::expm1(-rate2) + std::exp(-rate2) * box.dark_count_prob;
    return {click1 * silent2, silent1 * click2, silent1 * silent2, click1 * click2};
}

OutcomeSampler::OutcomeSampler(const PolarizationState& state, const MeasurementBoxConfig& box,
                               double mean)
    : probs_(outcome_probabilities(state, box, mean)) {
    p_event_ = probs_.bit0 + probs_.bit1 + probs_.double_click;
    log_silent_ = std::log1p(-p_event_);
    if (p_event_ > 0.0) {
        p_bit0_given_event_ = probs_.bit0 / p_event_;
        p_bit1_given_event_ = probs_.bit1 / p_event_;
    } else {
        p_bit0_given_event_ = 0.0;
        p_bit1_given_event_ = 0.0;
    }
}

OutcomeSampler::FastDraw OutcomeSampler::next_fast(Rng& rng) const {
    if (p_event_ <= 0.0) return {std::numeric_limits<std::uint64_t>::max(), Outcome::NoClick};
    const std::uint64_t skipped = p_event_ >= 1.0 ? 0 : rng.geometric_log(log_silent_);
    const double u = rng.uniform();
    if (u < p_bit0_given_event_) return {skipped, Outcome::Bit0};
    if (u < p_bit0_given_event_ + p_bit1_given_event_) return {skipped, Outcome::Bit1};
    return {skipped, Outcome::DoubleClick};
}

OutcomeSampler::Draw OutcomeSampler::next(Rng& rng) const {
    const auto d = next_fast(rng);
    switch (d.outcome) {
        case Outcome::Bit0: return {d.no_clicks, Bit{0}};
        case Outcome::Bit1: return {d.no_clicks, Bit{1}};
        case Outcome::DoubleClick: return {d.no_clicks, Discard{DiscardReason::DoubleClick}};
        case Outcome::NoClick: break;
    }
    return {d.no_clicks, Discard{DiscardReason::NoClick}};
}

PoissonFit fit_poisson(const std::map<std::uint64_t, std::uint64_t>& histogram) {
    std::uint64_t total = 0;
    double weighted = 0.0;
    for (const auto& [count, occurrences] : histogram) {
        total += occurrences;
        weighted += static_cast<double>(count) * static_cast<double>(occurrences);
    }
    if (total == 0) throw std::invalid_argument("fit_poisson: empty histogram");
    if (total < 100) throw std::invalid_argument("fit_poisson: need at least 100 occurrences");

    const double n_total = static_cast<double>(total);
    const double mean = weighted / n_total;
    if (mean == 0.0) return {0.0, 0.0, 0, 1.0};

    const std::uint64_t max_count = histogram.rbegin()->first;
    struct Bin {
        double observed = 0.0;
        double expected = 0.0;
    };
    std::vector<Bin> bins;
    Bin current;
    double cdf = 0.0;
    for (std::uint64_t k = 0; k <= max_count; ++k) {
        const double pk = poisson_pmf(static_cast<std::int64_t>(k), mean);
        cdf += pk;
        auto it = histogram.find(k);
        current.observed += it == histogram.end() ? 0.0 : static_cast<double>(it->second);
        current.expected += pk * n_total;
        if (current.expected >= 5.0) {
            bins.push_back(current);
            current = {};
        }
    }
    // upper tail beyond the largest observed count
    current.expected += std::max(0.0, 1.0 - cdf) * n_total;
    if (current.expected >= 5.0 || bins.empty()) {
        bins.push_back(current);
    } else {
        bins.back().observed += current.observed;
        bins.back().expected += current.expected;
    }

    double chi2 = 0.0;
    for (const auto& b : bins) {
        if (b.expected > 0.0) chi2 += (b.observed - b.expected) * (b.observed - b.expected) / b.expected;
    }
    const int dof = static_cast<int>(bins.size()) - 2;  // one constraint, one fitted parameter
    const double p = dof > 0 ? boost::math::gamma_q(0.5 * dof, 0.5 * chi2) : 1.0;
    return {mean, chi2, dof, p};
}

Spectrum read_spectrum(std::istream& in) {
    Spectrum s;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        double wavelength = 0.0;
        double power = 0.0;
        if (!(fields >> wavelength)) continue;  // blank line
        if (!(fields >> power)) {
            throw std::invalid_argument("spectrum: line " + std::to_string(line_no) + " has one column");
        }
        s.wavelength_nm.push_back(wavelength);
        s.power_w_per_nm.push_back(power);
    }
    check_spectrum(s);
    return s;
}

double compute_eqe(const Spectrum& spectrum, double current_density, double area_cm2) {
    check_spectrum(spectrum);
    if (!(current_density > 0.0)) throw std::invalid_argument("compute_eqe: current density must be > 0");
    if (!(area_cm2 > 0.0)) throw std::invalid_argument("compute_eqe: area must be > 0");
    // photon flux density phi / (h c / lambda), lambda converted nm -> m
    const double photons_per_s = trapezoid(spectrum, [](double lambda_nm, double phi) {
        return phi * lambda_nm * 1e-9 / (kPlanck * kLightSpeed);
    });
    const double carriers_per_s = current_density * area_cm2 / kElementaryCharge;
    return photons_per_s / carriers_per_s;
}

double compute_radiance(const Spectrum& spectrum, double area_cm2) {
    check_spectrum(spectrum);
    if (!(area_cm2 > 0.0)) throw std::invalid_argument("compute_radiance: area must be > 0");
    const double power = trapezoid(spectrum, [](double, double phi) { return phi; });
    return power / (std::numbers::pi * area_cm2 * 1e-4);
}

}  // namespace qrng
