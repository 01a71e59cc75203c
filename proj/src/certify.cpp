// SPDX-License-Identifier: Apache-2.0
#include "qrng/certify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace qrng {

std::string_view to_string(CertificationMethod method) {
    return method == CertificationMethod::NumericProgram ? "numeric-program" : "oracle";
}

namespace {

void check_probability(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string("guessing probability: ") + what + " must lie in [0, 1]");
    }
}

}  // namespace

double guessing_probability(double p_suc_h, double p_suc_v) {
    check_probability(p_suc_h, "p_suc_h");
    check_probability(p_suc_v, "p_suc_v");

    // t: total weight x test success carried by projective measurements.
    // Constant-0 strategy weight = p_suc_h - t, constant-1 weight = p_suc_v - t,
    // projective weight r = 1 - p_suc_h - p_suc_v + 2t.
    auto objective = [&](double t) {
        const double r = 1.0 - p_suc_h - p_suc_v + 2.0 * t;
        const double constant = p_suc_h + p_suc_v - 2.0 * t;
        return constant + 0.5 * r + std::sqrt(std::max(0.0, t * (r - t)));
    };

    double lo = std::max(0.0, p_suc_h + p_suc_v - 1.0);
    double hi = std::min(p_suc_h, p_suc_v);
    const double f_lo = objective(lo);
    const double f_hi = objective(hi);

    constexpr double inv_phi = 0.6180339887498949;
    double a = lo;
    double b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    for (int iter = 0; iter < 200 && b - a > 1e-15; ++iter) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        }
    }
    const double best = std::max({f_lo, f_hi, f1, f2, objective(0.5 * (a + b))});
    return std::clamp(best, 0.5, 1.0);
}

double min_entropy(double p_g) {
    if (!(p_g > 0.0)) throw std::invalid_argument("min_entropy: p_g must be > 0");
    if (p_g > 1.0) throw std::invalid_argument("min_entropy: p_g must be <= 1");
    return p_g == 1.0 ? 0.0 : -std::log2(p_g);
}

namespace {

using Column = std::array<double, 3>;
using Matrix3 = std::array<std::array<double, 3>, 3>;

bool invert(const Matrix3& m, Matrix3& out) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::fabs(det) < 1e-14) return false;
    const double inv = 1.0 / det;
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
    return true;
}

/// Dense revised simplex for max c.w s.t. A w = b, w >= 0 with three rows.
/// Columns [0, 3) are the phase-one artificials.
class ThreeRowSimplex {
  public:
    ThreeRowSimplex(std::vector<Column> columns, std::vector<double> costs, Column rhs)
        : cols_(std::move(columns)), costs_(std::move(costs)), rhs_(rhs) {}

    /// Returns the optimum, or throws InfeasibleError.
    double solve() {
        const std::size_t n = cols_.size();
        std::vector<Column> all(3 + n);
        all[0] = {1, 0, 0};
        all[1] = {0, 1, 0};
        all[2] = {0, 0, 1};
        std::copy(cols_.begin(), cols_.end(), all.begin() + 3);

        std::array<std::size_t, 3> basis{0, 1, 2};
        std::vector<double> phase1(3 + n, 0.0);
        phase1[0] = phase1[1] = phase1[2] = -1.0;
        run(all, phase1, basis, false);
        const auto x = primal(all, basis);
        double artificial = 0.0;
        for (int i = 0; i < 3; ++i) {
            if (basis[i] < 3) artificial += x[i];
        }
        if (artificial > 1e-9) throw InfeasibleError("oracle: no strategy in the grid family reproduces the statistics");

        std::vector<double> phase2(3 + n, 0.0);
        std::copy(costs_.begin(), costs_.end(), phase2.begin() + 3);
        run(all, phase2, basis, true);
        const auto xf = primal(all, basis);

        // verify the constraint residual of the final mixture
        Column achieved{0, 0, 0};
        double value = 0.0;
        for (int i = 0; i < 3; ++i) {
            if (basis[i] < 3) {
                if (xf[i] > 1e-9) throw InfeasibleError("oracle: artificial variable left in basis");
                continue;
            }
            for (int r = 0; r < 3; ++r) achieved[r] += all[basis[i]][r] * xf[i];
            value += phase2[basis[i]] * xf[i];
        }
        for (int r = 0; r < 3; ++r) {
            if (std::fabs(achieved[r] - rhs_[r]) > 1e-6) {
                throw InfeasibleError("oracle: mixture misses the statistics by more than 1e-6");
            }
        }
        return value;
    }

  private:
    Column primal(const std::vector<Column>& all, const std::array<std::size_t, 3>& basis) const {
        Matrix3 b{};
        for (int i = 0; i < 3; ++i) {
            for (int r = 0; r < 3; ++r) b[r][i] = all[basis[i]][r];
        }
        Matrix3 binv{};
        invert(b, binv);
        Column x{};
        for (int i = 0; i < 3; ++i) {
            x[i] = binv[i][0] * rhs_[0] + binv[i][1] * rhs_[1] + binv[i][2] * rhs_[2];
        }
        return x;
    }

    void run(const std::vector<Column>& all, const std::vector<double>& cost,
             std::array<std::size_t, 3>& basis, bool forbid_artificial) {
        constexpr double eps = 1e-12;
        for (int iter = 0; iter < 10000; ++iter) {
            Matrix3 b{};
            for (int i = 0; i < 3; ++i) {
                for (int r = 0; r < 3; ++r) b[r][i] = all[basis[i]][r];
            }
            Matrix3 binv{};
            if (!invert(b, binv)) throw InfeasibleError("oracle: singular basis");
            Column x{};
            for (int i = 0; i < 3; ++i) {
                x[i] = binv[i][0] * rhs_[0] + binv[i][1] * rhs_[1] + binv[i][2] * rhs_[2];
            }
            // duals y = c_B^T B^{-1}
            Column y{0, 0, 0};
            for (int r = 0; r < 3; ++r) {
                for (int i = 0; i < 3; ++i) y[r] += cost[basis[i]] * binv[i][r];
            }
            const bool bland = iter > 500;
            std::size_t entering = all.size();
            double best = eps;
            for (std::size_t j = forbid_artificial ? 3 : 0; j < all.size(); ++j) {
                const double d = cost[j] - (y[0] * all[j][0] + y[1] * all[j][1] + y[2] * all[j][2]);
                if (d > best) {
                    entering = j;
                    if (bland) break;
                    best = d;
                }
            }
            if (entering == all.size()) return;
            Column u{};
            for (int i = 0; i < 3; ++i) {
                u[i] = binv[i][0] * all[entering][0] + binv[i][1] * all[entering][1] +
                       binv[i][2] * all[entering][2];
            }
            int leaving = -1;
            double ratio = 0.0;
            for (int i = 0; i < 3; ++i) {
                if (u[i] > 1e-12) {
                    const double q = std::max(0.0, x[i]) / u[i];
                    if (leaving < 0 || q < ratio - 1e-15) {
                        leaving = i;
                        ratio = q;
                    }
                }
            }
            if (leaving < 0) return;  // unbounded cannot happen: weights sum to one
            basis[leaving] = entering;
        }
    }

    std::vector<Column> cols_;
    std::vector<double> costs_;
    Column rhs_;
};

}  // namespace

double oracle_guessing_probability(double p_suc_h, double p_suc_v, int grid_resolution) {
    check_probability(p_suc_h, "p_suc_h");
    check_probability(p_suc_v, "p_suc_v");
    if (grid_resolution < 64) throw std::invalid_argument("oracle: grid_resolution must be >= 64");

    using namespace std::complex_literals;
    const std::complex<double> h_ket[2] = {1.0, 0.0};
    const std::complex<double> v_ket[2] = {0.0, 1.0};
    const std::complex<double> r_ket[2] = {(std::numbers::sqrt2 / 2.0), 1i * (std::numbers::sqrt2 / 2.0)};
    auto overlap2 = [](const std::complex<double>* a, const std::complex<double>* b) {
        return std::norm(std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1]);
    };

    std::vector<Column> columns;
    std::vector<double> costs;
    const int res = grid_resolution;
    columns.reserve(static_cast<std::size_t>(res) * res + 2);
    // constant-output devices: always 0, always 1; the guess is always right
    columns.push_back({1.0, 0.0, 1.0});
    costs.push_back(1.0);
    columns.push_back({0.0, 1.0, 1.0});
    costs.push_back(1.0);
    for (int i = 0; i < res; ++i) {
        const double theta = std::numbers::pi * i / (res - 1);
        for (int j = 0; j < res; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / res;
            // outcome 0 projects onto psi
            const std::complex<double> psi[2] = {std::cos(theta / 2),
                                                 std::exp(1i * phi) * std::sin(theta / 2)};
            const double p0_h = overlap2(psi, h_ket);
            const double p1_v = 1.0 - overlap2(psi, v_ket);
            const double p0_r = overlap2(psi, r_ket);
            columns.push_back({p0_h, p1_v, 1.0});
            costs.push_back(std::max(p0_r, 1.0 - p0_r));
        }
    }
    ThreeRowSimplex lp(std::move(columns), std::move(costs), {p_suc_h, p_suc_v, 1.0});
    return lp.solve();
}

Certificate certify(double p_suc_h, double p_suc_v, CertificationMethod method) {
    Certificate c;
    c.p_suc_h = p_suc_h;
    c.p_suc_v = p_suc_v;
    c.method = method;
    c.guessing_probability = method == CertificationMethod::NumericProgram
                                 ? guessing_probability(p_suc_h, p_suc_v)
                                 : oracle_guessing_probability(p_suc_h, p_suc_v);
    const double h = min_entropy(c.guessing_probability);
    c.min_entropy_per_bit = std::floor(h / kMinEntropyGranularity) * kMinEntropyGranularity;
    c.min_entropy_per_bit = std::clamp(c.min_entropy_per_bit, 0.0, 1.0);
    return c;
}

}  // namespace qrng
