#include "treemg/problems.hpp"

#include <cmath>

namespace treemg {

double chi_sin(std::span<const double> x) {
    const double d = static_cast<double>(x.size());
    double v = d * M_PI * M_PI;
    for (double xi : x) v *= std::sin(M_PI * xi);
    return v;
}

double chi_ball(std::span<const double> x) {
    double r2 = 0.0;
    for (double xi : x) r2 += (xi - 0.5) * (xi - 0.5);
    return r2 < 0.01 ? 1.0 : 0.0;
}

void gaussian_scenario(double x, double y, double& chi, double& phi) {
    chi = std::exp(-(125.0 * x) * (125.0 * x) - (125.0 * y) * (125.0 * y));
    phi = 45.0 * 45.0 +
          135.0 * 135.0 * (std::exp(-(15.0 * x) * (15.0 * x)) + std::exp(-(15.0 * y) * (15.0 * y)));
}

bool ProblemSpec::coupled() const {
    if (coupling.empty()) return false;
    const int c = channel_count();
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
            if (i != j && coupling[i * c + j] != Cplx(0.0)) return true;
    return false;
}

Cplx ProblemSpec::coupling_at(int i, int j) const {
    if (coupling.empty() || i == j) return Cplx(0.0);
    return coupling[i * channel_count() + j];
}

void ProblemSpec::validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("problem dimension out of range");
    if (channels.empty()) throw ConfigError("need at least one channel");
    if (!coupling.empty()) {
        const std::size_t c = channels.size();
        if (coupling.size() != c * c) throw ConfigError("coupling matrix must be c x c");
        if (c < 2) throw ConfigError("coupled block needs at least two channels");
    }
    if (thetaGlobal < 0.0 || thetaGlobal > M_PI / 4.0 + 1e-12)
        throw ConfigError("thetaGlobal must lie in [0, pi/4]");
    for (const ChannelFields& ch : channels)
        if ((ch.chi == ChiKind::GaussianScenario || ch.phi == PhiKind::GaussianScenario) && dim != 2)
            throw ConfigError("the Gaussian scenario is two-dimensional");
}

double ProblemSpec::chi_at(std::span<const double> x, int channel) const {
    const ChannelFields& ch = channels[channel];
    switch (ch.chi) {
        case ChiKind::Zero: return 0.0;
        case ChiKind::SinProduct: return chi_sin(x);
        case ChiKind::BallIndicator: return chi_ball(x);
        case ChiKind::GaussianScenario: {
            double c, p;
            gaussian_scenario(x[0], x[1], c, p);
            return c;
        }
    }
    return 0.0;
}

Cplx ProblemSpec::phi_at(std::span<const double> x, int channel) const {
    const ChannelFields& ch = channels[channel];
    if (ch.phi == PhiKind::Constant) return ch.phiValue;
    double c, p;
    gaussian_scenario(x[0], x[1], c, p);
    return Cplx(p, 0.0);
}

double cell_theta(const ProblemSpec& spec, int level, const Index& cellIndex) {
    if (spec.absorbing.enabled) {
        const double h = std::pow(3.0, -level);
        for (int d = 0; d < spec.dim; ++d) {
            const double centre = (cellIndex[d] + 0.5) * h;
            if (spec.absorbing.openHi[d] && centre > 1.0 - spec.absorbing.fraction)
                return spec.absorbing.angle;
            if (spec.absorbing.openLo[d] && centre < spec.absorbing.fraction)
                return spec.absorbing.angle;
        }
    }
    return spec.thetaGlobal;
}

int kh_family_level(double k) {
    // k * h = 5/9 with h = 3^-L, i.e. 3^L = 9k/5.
    const double target = 9.0 * k / 5.0;
    int level = 0;
    double m = 1.0;
    while (m + 0.5 < target && level < 12) {
        m *= 3.0;
        ++level;
    }
    if (std::abs(m - target) > 0.5) throw ConfigError("wave number is not in the kh=5/9 family");
    return level;
}

}  // namespace treemg
