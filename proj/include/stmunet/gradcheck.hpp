/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stmunet/tensor.hpp"

namespace stmunet {

/// Harness scalar. Finite differences at h = 1e-5 sit on a roundoff floor
/// of eps*|loss|/(2h); 80-bit extended precision keeps that floor three
/// orders below the 1e-6 tolerance even for deep composite blocks, where
/// plain f64 noise would drown small gradient entries.
using Real = long double;

/// A pure differentiable function of its inputs. Called several times per
/// check with perturbed values; operations record on the inputs' tape when
/// one is attached.
using TapedOp = std::function<Tensor<Real>(std::span<Tensor<Real>>)>;

/// Central-finite-difference check (h = 1e-5) of every input element
/// against the tape's analytic gradient of a weighted sum of the op output.
/// Returns max over elements of |analytic - numeric| / max(|numeric|, 1e-8).
/// `margin` pushes generated values away from zero (for kinked ops).
double grad_check(const TapedOp& op, std::span<const Shape> input_shapes, uint64_t seed,
                  double margin = 0.0);

struct GradCheckCase {
  std::string name;
  double tol;
  std::function<double(uint64_t seed)> run;
};

/// One case per differentiable operation in the kit, including the
/// end-to-end model spot check (tolerance 1e-4; everything else 1e-6).
std::vector<GradCheckCase> standard_gradcheck_suite();

}  // namespace stmunet
