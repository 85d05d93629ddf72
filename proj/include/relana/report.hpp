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

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "relana/evalharness.hpp"

namespace relana::report {

enum class Format : std::uint8_t { Json = 0, Csv = 1, Plot = 2 };

Format parse_format(std::string_view name);

struct Row {
  std::string section;  // rec, cls, cart/<strategy>
  std::string metric;
  evalharness::MetricSummary summary;
};

/// "0.954(.005)"; the parenthesised sigma is omitted for a single run.
std::string format_mean_sd(const evalharness::MetricSummary& s);

/// Metric rows of a metrics.json document in a fixed order.
std::vector<Row> collect_rows(const nlohmann::json& metrics);

/// Renders the metrics of a finished run directory. `sections` restricts the
/// output; a requested section absent from the run is a ValidationError, as is
/// a run whose manifest lacks the eval stage. Returns the files written.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& run_dir, Format format,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<std::string>& sections = {});

}  // namespace relana::report
