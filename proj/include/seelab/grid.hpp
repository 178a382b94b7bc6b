#pragma once

#include <vector>

#include "seelab/common.hpp"

namespace seelab {

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int M = 0;
    std::vector<double> knots;  // M+1 strictly increasing, knots[0]=t0, knots[M]=T

    static TimeGrid uniform(double t0, double T, int M) {
        require(M >= 1, "TimeGrid: step count must be >= 1");
        require(t0 >= 0.0 && t0 < T, "TimeGrid: need 0 <= t0 < T");
        TimeGrid g;
        g.t0 = t0;
        g.T = T;
        g.M = M;
        g.knots.resize(M + 1);
        for (int i = 0; i <= M; ++i) g.knots[i] = t0 + (T - t0) * i / M;
        g.knots[M] = T;
        return g;
    }

    double dt(int i) const { return knots[i + 1] - knots[i]; }

    void validate() const {
        require(M >= 1 && static_cast<int>(knots.size()) == M + 1, "TimeGrid: bad knot count");
        require(knots.front() == t0 && knots.back() == T, "TimeGrid: endpoints mismatch");
        for (int i = 0; i < M; ++i)
            require(knots[i] < knots[i + 1], "TimeGrid: knots must be strictly increasing");
    }
};

}  // namespace seelab
