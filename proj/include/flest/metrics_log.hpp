#pragma once

#include "json.hpp"

#include "flest/evaluation.hpp"
#include "flest/federation.hpp"

namespace flest {

/// ordered_json keeps insertion order, so serialized records are
/// byte-stable across runs.
nlohmann::ordered_json report_to_json(const EvalReport& r);
nlohmann::ordered_json round_to_json(const RoundRecord& rec);

}  // namespace flest
