// Copyright 2026 The relana Authors
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

#include <cstdint>
#include <span>
#include <vector>

#include "relana/catalog.hpp"

namespace relana::testing {

using catalog::ItemId;

/// Explicit distribution over every basket (subset) of a small catalog. All
/// marginals are exact, so relatedness and the independence terms can be
/// evaluated without sampling error.
class SetJoint {
 public:
  SetJoint(std::size_t num_items, std::uint64_t seed);

  std::size_t num_items() const { return m_; }
  /// P(every item of `set` is in the basket); the empty set has probability 1.
  double p(std::span<const ItemId> set) const;
  /// P(e in basket | set in basket).
  double p_given(ItemId e, std::span<const ItemId> set) const;
  /// log p(i, e) / (p(i) p(e)).
  double relatedness(ItemId i, ItemId e) const;
  /// log p(set) / prod p(i).
  double tau(std::span<const ItemId> set) const;
  /// log p(set | e) / prod p(i | e).
  double tau_given(std::span<const ItemId> set, ItemId e) const;

 private:
  std::size_t m_;
  std::vector<double> mass_;  // by basket bitmask
};

}  // namespace relana::testing
