// Copyright 2026 The debias-dg Authors.
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

#ifndef DEBIAS_RANDOM_H_
#define DEBIAS_RANDOM_H_

#include <cstdint>
#include <random>

namespace debias {

using Rng = std::mt19937_64;

// Independent sub-seed for stream `stream` of a base seed (splitmix64 mix).
inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Draws from Beta(a, b) through two gamma variates.
inline double SampleBeta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

}  // namespace debias

#endif  // DEBIAS_RANDOM_H_
