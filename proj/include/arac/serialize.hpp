#pragma once

#include "arac/mlp.hpp"
#include "json.hpp"

namespace arac::serialize {

// Self-describing JSON form of a fully connected net: dims plus flat
// parameter arrays. Doubles round-trip exactly (shortest-representation
// encoding on write, exact parse on read).
nlohmann::json mlp_to_json(const numerics::Mlp& m);
numerics::Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace arac::serialize
