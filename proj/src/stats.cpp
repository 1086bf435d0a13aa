// Copyright (c) 2026 The sdquant Authors. All Rights Reserved.
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

#include "sdq/stats.hpp"

#include <cmath>
#include <string>

#include "sdq/tensor.hpp"

namespace sdq {

double weight_sigma(std::span<const double> w) {
  if (w.empty()) throw Error("weight_sigma: empty tensor");
  double s = 0.0;
  for (double v : w) s += v * v;
  return std::sqrt(s / static_cast<double>(w.size()));
}

double activation_sigma(std::span<const double> x) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : x) {
    if (v > 0.0) {
      s += v * v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : std::sqrt(s / static_cast<double>(n));
}

SigmaTracker::SigmaTracker(double momentum, SigmaSource source) : momentum_(momentum), source_(source) {
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw Error("SigmaTracker: momentum must lie in (0, 1), got " + std::to_string(momentum));
  }
}

SigmaTracker::SigmaTracker(double momentum, SigmaSource source, double initial) : SigmaTracker(momentum, source) {
  if (!(initial >= 0.0)) throw Error("SigmaTracker: initial sigma must be non-negative");
  sigma_hat_ = initial;
  initialized_ = true;
}

double SigmaTracker::update(double sigma_t) {
  if (!(sigma_t >= 0.0)) throw Error("SigmaTracker::update: negative sigma " + std::to_string(sigma_t));
  if (!initialized_) {
    sigma_hat_ = sigma_t;
    initialized_ = true;
  } else {
    sigma_hat_ = (1.0 - momentum_) * sigma_hat_ + momentum_ * sigma_t;
  }
  return sigma_hat_;
}

void SigmaTracker::restore(double sigma_hat, bool initialized) {
  if (!(sigma_hat >= 0.0)) throw Error("SigmaTracker::restore: negative sigma");
  sigma_hat_ = sigma_hat;
  initialized_ = initialized;
}

}  // namespace sdq
