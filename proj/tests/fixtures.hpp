#pragma once

#include "persona/featselect.hpp"

#include <string>
#include <vector>

namespace fixtures {

// Nine-emotion correlation fixture used by the selection oracle tests.
inline persona::featselect::CorrelationMatrix nine_emotion_matrix() {
    persona::featselect::CorrelationMatrix corr;
    corr.feature_names = {"Feelinglove", "Disgust", "Fear",     "Joy",  "Negative",
                          "Positive",    "Sadness", "Surprise", "Trust"};
    corr.values = {
        {1, -0.02, -0.01, 0.46, -0.08, 0.29, 0.01, 0.03, 0.28},
        {-0.02, 1, 0.55, 0.08, 0.73, 0.02, 0.63, 0.15, 0.04},
        {-0.01, 0.55, 1, 0.1, 0.65, 0.1, 0.68, 0.19, 0.15},
        {0.46, 0.08, 0.1, 1, -0.04, 0.77, 0.09, 0.5, 0.71},
        {-0.08, 0.73, 0.65, -0.04, 1, -0.05, 0.73, 0.14, -0.04},
        {0.29, 0.02, 0.1, 0.77, -0.05, 1, 0.04, 0.36, 0.73},
        {0.01, 0.63, 0.68, 0.09, 0.73, 0.04, 1, 0.19, 0.05},
        {0.03, 0.15, 0.19, 0.5, 0.14, 0.36, 0.19, 1, 0.4},
        {0.28, 0.04, 0.15, 0.71, -0.04, 0.73, 0.05, 0.4, 1},
    };
    corr.degenerate.assign(9, 0);
    return corr;
}

// Independent two-pass Pearson: explicit means first, then centered sums.
// Kept deliberately separate from the library's single-pass implementation.
inline double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace fixtures
