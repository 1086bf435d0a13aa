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

#pragma once

#include <span>

namespace sdq {

// Zero-mean standard deviation of a weight tensor: sqrt(mean(w^2)).
// Throws on an empty span.
double weight_sigma(std::span<const double> w);

// Standard deviation of the strictly positive entries mirrored around zero,
// i.e. sqrt(mean(p^2)) over p > 0. Zero when nothing is positive.
double activation_sigma(std::span<const double> x);

enum class SigmaSource { weights, activations };

// Exponential running average of per-batch sigma:
//   sigma_hat <- (1 - momentum) * sigma_hat + momentum * sigma_t
//
// A tracker built without an initial value adopts the first observation as
// is, so training does not start from a ~1/momentum step warm-up.
class SigmaTracker {
 public:
  static constexpr double kDefaultMomentum = 0.001;

  explicit SigmaTracker(double momentum = kDefaultMomentum, SigmaSource source = SigmaSource::activations);
  SigmaTracker(double momentum, SigmaSource source, double initial);

  double update(double sigma_t);
  double value() const { return sigma_hat_; }
  double momentum() const { return momentum_; }
  SigmaSource source() const { return source_; }
  bool initialized() const { return initialized_; }

  // Used when restoring from a checkpoint.
  void restore(double sigma_hat, bool initialized);

 private:
  double momentum_;
  SigmaSource source_;
  double sigma_hat_ = 0.0;
  bool initialized_ = false;
};

}  // namespace sdq
