#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "dissipic/iqc.hpp"
#include "dissipic/synthesize.hpp"

namespace dissipic {

using Json = nlohmann::json;

/// Matrices are arrays of rows; an empty matrix is {"rows": r, "cols": c}.
/// A {"rows", "cols"} object without "data" reads as zeros; with "data" it
/// holds the entries row by row.
Json to_json(const Mat& m);
Mat mat_from_json(const Json& j, const std::string& where);

Json to_json(const StateSpace& s);
StateSpace state_space_from_json(const Json& j, const std::string& where);

/// Missing blocks are zero; sizes come from "dims" {n_p, n_v, n_w, n_d, n_e, n_u, n_y}
/// or from the blocks that are present.
Json to_json(const UncertainLtiPlant& p);
UncertainLtiPlant plant_from_json(const Json& j);

Json to_json(const UncertainLtiSystem& s);
UncertainLtiSystem system_from_json(const Json& j);

Json to_json(const RinnController& k);
RinnController controller_from_json(const Json& j);

Json to_json(const StorageCertificate& c);
StorageCertificate certificate_from_json(const Json& j);

Json to_json(const ThetaHat& th);
ThetaHat theta_hat_from_json(const Json& j);

/// {"kind": "zero"} | {"kind": "l2_gain", "gamma2": g} | {"kind": "matrix", "X": [[...]], "n_d": k}
SupplyRate supply_from_json(const Json& j, Eigen::Index n_d, Eigen::Index n_e);

/// {"kind": "qc"|"static", "M": [[...]], "n_v": k} | {"kind": "dynamic", "psi1": ss, "psi2": ss}
IqcSpec iqc_from_json(const Json& j);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Parses JSON text; syntax errors become ConfigError with line and column.
Json parse_json_text(const std::string& text, const std::string& source);

}  // namespace dissipic
