#pragma once

#include <span>
#include <vector>

#include "treemg/types.hpp"

namespace treemg {

/// chi = d*pi^2 * prod_i sin(pi x_i); the manufactured Poisson right-hand side.
double chi_sin(std::span<const double> x);

/// Indicator of the open ball of radius 0.1 around the domain centre.
double chi_ball(std::span<const double> x);

/// The p=2 scattering scenario: chi a sharp Gaussian stimulus at the origin
/// corner, phi = 45^2 plus two nuclei ridges along the axes.
void gaussian_scenario(double x, double y, double& chi, double& phi);

enum class ChiKind { Zero, SinProduct, BallIndicator, GaussianScenario };
enum class PhiKind { Constant, GaussianScenario };

struct ChannelFields {
    ChiKind chi = ChiKind::SinProduct;
    PhiKind phi = PhiKind::Constant;
    Cplx phiValue = Cplx(0.0);  // used for PhiKind::Constant
};

/// Near-boundary absorbing layer: cells whose centre lies within `fraction`
/// of an open face are rotated by `angle`, independently of thetaGlobal.
struct AbsorbingLayer {
    bool enabled = false;
    double fraction = 1.0 / 3.0;
    double angle = 0.0;                    // radians
    std::array<bool, kMaxDim> openHi{};    // face x_d = 1 open
    std::array<bool, kMaxDim> openLo{};    // face x_d = 0 open
};

struct ProblemSpec {
    int dim = 2;
    double thetaGlobal = 0.0;  // radians, in [0, pi/4]
    AbsorbingLayer absorbing;
    std::vector<ChannelFields> channels{ChannelFields{}};
    /// Off-diagonal channel couplings A_ij (row-major c x c, diagonal ignored);
    /// empty means independent channels. Couplings multiply the mass term.
    std::vector<Cplx> coupling;

    int channel_count() const { return static_cast<int>(channels.size()); }
    bool coupled() const;
    Cplx coupling_at(int i, int j) const;
    void validate() const;

    double chi_at(std::span<const double> x, int channel) const;
    Cplx phi_at(std::span<const double> x, int channel) const;
};

/// Rotation angle of a cell: the absorbing angle if the cell centre lies in
/// the layer of an open face, thetaGlobal otherwise.
double cell_theta(const ProblemSpec& spec, int level, const Index& cellIndex);

/// Regular-grid level of the kh = 5/9 Helmholtz stress family for wave number
/// k in {15, 45, 135}: h = (5/9)/k = 3^-level.
int kh_family_level(double k);

}  // namespace treemg
