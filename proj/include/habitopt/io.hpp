#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"
#include "habitopt/solvers.hpp"

namespace habitopt {

using Json = nlohmann::json;

Json load_json(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);
/// Pretty-printed with sorted keys and a trailing newline.
std::string dump(const Json& j);

Json tree_to_json(const EventTree& tree);
EventTree tree_from_json(const Json& j);

/// Per-level arrays of per-atom values (k = first..T).
Json process_to_json(const AdaptedProcess& p, int first = 0);
AdaptedProcess process_from_json(const EventTree& tree, const Json& j, int first = 0, double fill = 0.0);

/// {"tree", "assets", "prices" [k<T][atom][i], "dividends" [k>=1][atom][i], "rates" [k>=1][atom of k-1],
///  "filtration_F" (optional)}
Json market_to_json(const MarketModel& model);
MarketModel market_from_json(const Json& j);

/// {"family": "power|exp|log", "gamma": float | [T+1], "rho", "beta": rows, "h": per-level arrays}
Json prefs_to_json(const HabitPreferences& p);
HabitPreferences prefs_from_json(const EventTree& tree, const Json& j);

/// {"eps": per-level arrays}
Json endowment_to_json(const AdaptedProcess& eps);
AdaptedProcess endowment_from_json(const EventTree& tree, const Json& j);

Json solution_to_json(const Solution& s);

/// Fixed-width 17-significant-digit rendering used for CSV output.
std::string format_number(double x);

}  // namespace habitopt
