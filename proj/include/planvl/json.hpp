#pragma once

#include <json.hpp>

namespace planvl {

// Field order in emitted records follows insertion order, so on-disk
// schemas read in the documented order.
using json = nlohmann::ordered_json;

// Scores are persisted with 6 decimal places.
double round6(double v);

}  // namespace planvl
