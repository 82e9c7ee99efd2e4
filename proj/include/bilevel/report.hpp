#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "bilevel/certify.hpp"
#include "bilevel/cq.hpp"
#include "bilevel/polytope.hpp"
#include "bilevel/sensitivity.hpp"
#include "bilevel/valuefn.hpp"

namespace bilevel {

// Insertion-ordered so artifacts read top-down and diff cleanly.
using Json = nlohmann::ordered_json;

// Non-finite values become the strings "inf", "-inf", "nan"; -0 becomes 0.
Json number(double v);
Json to_json(const Vec& v);
Json to_json(const std::vector<Vec>& vs);
Json to_json(const Polytope& P);
Json to_json(const Caps& caps);
Json to_json(const GridSpec& grid);
Json to_json(const CQVerdict& v);
Json to_json(const std::vector<CQVerdict>& vs);
Json to_json(const Estimate& est);
Json to_json(const Certificate& c);
Json to_json(const MinimaxReport& rep);

// Two-space indentation and a trailing newline. Doubles print as the
// shortest decimal that round-trips (never more than 17 significant digits).
std::string dump(const Json& j);

}  // namespace bilevel
