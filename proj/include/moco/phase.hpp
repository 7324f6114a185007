#pragma once

#include <array>
#include <cmath>

namespace moco {

/// Motion phase coordinate: cardiac phase c in [0,1) (periodic) and
/// respiratory coordinate r in [0,1].
struct PhaseSample {
    double c = 0.0;
    double r = 0.0;
};

/// Raised-cosine ramp used by the phantom motion laws, s(0)=0, s(1/2)=1.
inline double raised_cosine(double x) {
    return 0.5 * (1.0 - std::cos(6.283185307179586476925286766559 * x));
}

/// Distance between phases: cardiac distance is circular, respiratory linear.
inline double phase_distance(const PhaseSample& a, const PhaseSample& b) {
    double dc = std::fabs(a.c - b.c);
    dc = dc > 0.5 ? 1.0 - dc : dc;
    double dr = a.r - b.r;
    return std::sqrt(dc * dc + dr * dr);
}

/// Phase embedding fed to the weight networks: [sin 2 pi c, cos 2 pi c, r].
inline std::array<double, 3> embed_phase(const PhaseSample& p) {
    double a = 6.283185307179586476925286766559 * p.c;
    return {std::sin(a), std::cos(a), p.r};
}

}  // namespace moco
