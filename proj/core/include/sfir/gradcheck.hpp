// Copyright 2026 the sfir authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

#include "sfir/autodiff.hpp"
#include "sfir/common.hpp"

// Finite-difference gradient checking. Runs on the f64 instantiation of the
// engine (values are drawn at f32 granularity and promoted) so the central
// difference at eps = 1e-3 resolves the analytic gradient to well under the
// 1e-4 relative-error budget.

namespace sfir::gradcheck {

struct Report {
    double max_rel_err = 0.0;
    size_t checked = 0;
};

inline double rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) /
           std::max({std::abs(analytic), std::abs(fd), 1.0});
}

/// Random tensor with f32-representable entries in [lo, hi].
inline ad::TensorT<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    ad::TensorT<double> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
    return t;
}

/// Per-coordinate central differences on every listed input of a scalar
/// graph. `build` must rebuild the graph from the current input values.
template <typename BuildFn>
Report check(std::vector<ad::VarT<double>>& inputs, BuildFn&& build, double eps = 1e-3) {
    auto scalar_value = [&] {
        ad::VarT<double> out = build();
        SFIR_CHECK(out.value().numel() == 1, "gradcheck: objective must be scalar");
        return out.value().data[0];
    };

    for (auto& in : inputs) in.zero_grad();
    ad::VarT<double> root = build();
    SFIR_CHECK(root.value().numel() == 1, "gradcheck: objective must be scalar");
    ad::backward(root);
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        SFIR_CHECK(in.node()->grad_touched, "gradcheck: input received no gradient");
        analytic.push_back(in.grad().data);
    }

    Report report;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& data = inputs[t].value().data;
        for (size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = scalar_value();
            data[i] = saved - eps;
            const double down = scalar_value();
            data[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic[t][i], fd));
            ++report.checked;
        }
    }
    return report;
}

/// Directional central differences: projects the full gradient onto random
/// unit directions spanning all inputs. Used for composites whose parameter
/// count makes per-coordinate sweeps too slow.
template <typename BuildFn>
Report check_directional(std::vector<ad::VarT<double>>& inputs, BuildFn&& build,
                         uint64_t seed, int directions = 8, double eps = 1e-3) {
    for (auto& in : inputs) in.zero_grad();
    ad::VarT<double> root = build();
    SFIR_CHECK(root.value().numel() == 1, "gradcheck: objective must be scalar");
    ad::backward(root);
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        SFIR_CHECK(in.node()->grad_touched, "gradcheck: input received no gradient");
        analytic.push_back(in.grad().data);
    }

    Rng rng(seed);
    Report report;
    for (int d = 0; d < directions; ++d) {
        std::vector<std::vector<double>> dir(inputs.size());
        double norm2 = 0.0;
        for (size_t t = 0; t < inputs.size(); ++t) {
            dir[t].resize(inputs[t].value().numel());
            for (auto& v : dir[t]) {
                v = rng.normal();
                norm2 += v * v;
            }
        }
        const double inv_norm = 1.0 / std::sqrt(norm2);
        double dot = 0.0;
        for (size_t t = 0; t < inputs.size(); ++t)
            for (size_t i = 0; i < dir[t].size(); ++i) {
                dir[t][i] *= inv_norm;
                dot += analytic[t][i] * dir[t][i];
            }

        auto shift = [&](double scale) {
            for (size_t t = 0; t < inputs.size(); ++t) {
                auto& data = inputs[t].value().data;
                for (size_t i = 0; i < dir[t].size(); ++i) data[i] += scale * dir[t][i];
            }
        };
        shift(eps);
        const double up = build().value().data[0];
        shift(-2.0 * eps);
        const double down = build().value().data[0];
        shift(eps);

        const double fd = (up - down) / (2.0 * eps);
        report.max_rel_err = std::max(report.max_rel_err, rel_err(dot, fd));
        ++report.checked;
    }
    return report;
}

}  // namespace sfir::gradcheck
