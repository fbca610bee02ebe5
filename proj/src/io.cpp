#include "dissipic/io.hpp"

#include <cstdio>

namespace dissipic {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

Eigen::Index index_field(const Json& j, const char* key, Eigen::Index fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    config_error(std::string("\"") + key + "\" must be a non-negative integer");
  }
  return static_cast<Eigen::Index>(j.at(key).get<long long>());
}

}  // namespace

Json to_json(const Mat& m) {
  if (m.size() == 0) return Json{{"rows", m.rows()}, {"cols", m.cols()}};
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (j.is_object()) {
    const Eigen::Index r = index_field(j, "rows", -1), c = index_field(j, "cols", -1);
    if (r < 0 || c < 0) config_error(where + ": matrix object needs \"rows\" and \"cols\"");
    Mat m = Mat::Zero(r, c);
    if (j.contains("data")) {
      const Json& d = j.at("data");
      if (!d.is_array() || static_cast<Eigen::Index>(d.size()) != r * c) {
        config_error(where + ": \"data\" must hold rows * cols numbers");
      }
      for (Eigen::Index i = 0; i < r * c; ++i) m(i / c, i % c) = d.at(static_cast<std::size_t>(i)).get<double>();
    }
    return m;
  }
  if (!j.is_array()) config_error(where + ": expected a matrix");
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  if (r == 0) return Mat(0, 0);
  if (!j.at(0).is_array()) config_error(where + ": matrix rows must be arrays");
  const Eigen::Index c = static_cast<Eigen::Index>(j.at(0).size());
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) config_error(where + ": ragged matrix");
    for (Eigen::Index k = 0; k < c; ++k) {
      const Json& v = row.at(static_cast<std::size_t>(k));
      if (!v.is_number()) config_error(where + ": non-numeric entry");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

Json to_json(const StateSpace& s) {
  return Json{{"A", to_json(s.A)}, {"B", to_json(s.B)}, {"C", to_json(s.C)}, {"D", to_json(s.D)}};
}

StateSpace state_space_from_json(const Json& j, const std::string& where) {
  for (const char* key : {"A", "B", "C", "D"}) {
    if (!j.contains(key)) config_error(where + ": missing \"" + key + "\"");
  }
  StateSpace s{mat_from_json(j.at("A"), where + ".A"), mat_from_json(j.at("B"), where + ".B"),
               mat_from_json(j.at("C"), where + ".C"), mat_from_json(j.at("D"), where + ".D")};
  s.validate();
  return s;
}

namespace {

struct PlantField {
  const char* name;
  Mat UncertainLtiPlant::*member;
  int rows, cols;  // 0 n_p, 1 n_v, 2 n_w, 3 n_d, 4 n_e, 5 n_u, 6 n_y
};

constexpr PlantField kPlantFields[] = {
    {"A_p", &UncertainLtiPlant::A_p, 0, 0},    {"B_pw", &UncertainLtiPlant::B_pw, 0, 2},
    {"B_pd", &UncertainLtiPlant::B_pd, 0, 3},  {"B_pu", &UncertainLtiPlant::B_pu, 0, 5},
    {"C_pv", &UncertainLtiPlant::C_pv, 1, 0},  {"D_pvw", &UncertainLtiPlant::D_pvw, 1, 2},
    {"D_pvd", &UncertainLtiPlant::D_pvd, 1, 3}, {"D_pvu", &UncertainLtiPlant::D_pvu, 1, 5},
    {"C_pe", &UncertainLtiPlant::C_pe, 4, 0},  {"D_pew", &UncertainLtiPlant::D_pew, 4, 2},
    {"D_ped", &UncertainLtiPlant::D_ped, 4, 3}, {"D_peu", &UncertainLtiPlant::D_peu, 4, 5},
    {"C_py", &UncertainLtiPlant::C_py, 6, 0},  {"D_pyw", &UncertainLtiPlant::D_pyw, 6, 2},
    {"D_pyd", &UncertainLtiPlant::D_pyd, 6, 3},
};

constexpr const char* kPlantDims[] = {"n_p", "n_v", "n_w", "n_d", "n_e", "n_u", "n_y"};

struct SystemField {
  const char* name;
  Mat UncertainLtiSystem::*member;
  int rows, cols;  // 0 n, 1 n_v, 2 n_w, 3 n_d, 4 n_e
};

constexpr SystemField kSystemFields[] = {
    {"A", &UncertainLtiSystem::A, 0, 0},     {"B_w", &UncertainLtiSystem::B_w, 0, 2},
    {"B_d", &UncertainLtiSystem::B_d, 0, 3}, {"C_v", &UncertainLtiSystem::C_v, 1, 0},
    {"D_vw", &UncertainLtiSystem::D_vw, 1, 2}, {"D_vd", &UncertainLtiSystem::D_vd, 1, 3},
    {"C_e", &UncertainLtiSystem::C_e, 4, 0}, {"D_ew", &UncertainLtiSystem::D_ew, 4, 2},
    {"D_ed", &UncertainLtiSystem::D_ed, 4, 3},
};

constexpr const char* kSystemDims[] = {"n", "n_v", "n_w", "n_d", "n_e"};

// Reads blocks by name; dimensions come from "dims" first and otherwise from
// any block that fixes them. Missing blocks are zero.
template <class S, class Field, std::size_t NF, std::size_t ND>
S blocks_from_json(const Json& j, const Field (&fields)[NF], const char* const (&dim_names)[ND], const char* what) {
  if (!j.is_object()) config_error(std::string(what) + " must be an object");
  std::array<Eigen::Index, ND> dims;
  dims.fill(-1);
  if (j.contains("dims")) {
    for (std::size_t i = 0; i < ND; ++i) dims[i] = index_field(j.at("dims"), dim_names[i], -1);
  }
  std::array<std::optional<Mat>, NF> read;
  for (std::size_t f = 0; f < NF; ++f) {
    if (!j.contains(fields[f].name)) continue;
    const Mat m = mat_from_json(j.at(fields[f].name), std::string(what) + "." + fields[f].name);
    for (const auto& [axis, size] : {std::pair{fields[f].rows, m.rows()}, std::pair{fields[f].cols, m.cols()}}) {
      Eigen::Index& d = dims[static_cast<std::size_t>(axis)];
      if (d >= 0 && d != size) {
        config_error(std::string(what) + "." + fields[f].name + ": size conflicts with " + dim_names[axis] + " = " +
                     std::to_string(d));
      }
      d = size;
    }
    read[f] = m;
  }
  for (auto& d : dims) d = std::max<Eigen::Index>(d, 0);
  S s;
  for (std::size_t f = 0; f < NF; ++f) {
    s.*(fields[f].member) = read[f] ? *read[f]
                                    : Mat::Zero(dims[static_cast<std::size_t>(fields[f].rows)],
                                                dims[static_cast<std::size_t>(fields[f].cols)]);
  }
  return s;
}

}  // namespace

Json to_json(const UncertainLtiPlant& p) {
  Json j;
  for (const PlantField& f : kPlantFields) j[f.name] = to_json(p.*(f.member));
  j["dims"] = Json{{"n_p", p.n_p()}, {"n_v", p.n_v()}, {"n_w", p.n_w()}, {"n_d", p.n_d()},
                   {"n_e", p.n_e()}, {"n_u", p.n_u()}, {"n_y", p.n_y()}};
  return j;
}

UncertainLtiPlant plant_from_json(const Json& j) {
  const UncertainLtiPlant p = blocks_from_json<UncertainLtiPlant>(j, kPlantFields, kPlantDims, "plant");
  p.validate();
  return p;
}

Json to_json(const UncertainLtiSystem& s) {
  Json j;
  for (const SystemField& f : kSystemFields) j[f.name] = to_json(s.*(f.member));
  return j;
}

UncertainLtiSystem system_from_json(const Json& j) {
  const UncertainLtiSystem s = blocks_from_json<UncertainLtiSystem>(j, kSystemFields, kSystemDims, "system");
  validate(s);
  return s;
}

Json to_json(const RinnController& k) {
  Json j;
  j["activation"] = to_string(k.activation);
  j["dims"] = Json{{"n_k", k.n_k()}, {"n_phi", k.n_phi()}, {"n_y", k.n_y()}, {"n_u", k.n_u()}};
  const auto b = k.blocks();
  for (std::size_t i = 0; i < b.size(); ++i) j[kControllerBlockNames[i]] = to_json(*b[i]);
  return j;
}

RinnController controller_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("dims")) config_error("controller needs \"dims\" {n_k, n_phi, n_y, n_u}");
  const Json& d = j.at("dims");
  const Activation act = activation_from_string(j.value("activation", std::string("tanh")));
  RinnController k = RinnController::zeros(index_field(d, "n_k", 0), index_field(d, "n_phi", 0),
                                           index_field(d, "n_y", 0), index_field(d, "n_u", 0), act);
  auto b = k.blocks();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!j.contains(kControllerBlockNames[i])) continue;
    const Mat m = mat_from_json(j.at(kControllerBlockNames[i]), std::string("controller.") + kControllerBlockNames[i]);
    if (m.rows() != b[i]->rows() || m.cols() != b[i]->cols()) {
      config_error(std::string("controller.") + kControllerBlockNames[i] + " has the wrong size");
    }
    *b[i] = m;
  }
  k.validate();
  return k;
}

Json to_json(const StorageCertificate& c) {
  return Json{{"P", to_json(c.P)},
              {"Lambda", to_json(c.Lambda)},
              {"lambda_p", c.lambda_p},
              {"feasibility_residual", c.feasibility_residual}};
}

StorageCertificate certificate_from_json(const Json& j) {
  StorageCertificate c;
  c.P = mat_from_json(j.at("P"), "certificate.P");
  c.Lambda = j.contains("Lambda") ? mat_from_json(j.at("Lambda"), "certificate.Lambda") : Mat(0, 0);
  c.lambda_p = j.value("lambda_p", 1.0);
  c.feasibility_residual = j.value("feasibility_residual", 0.0);
  return c;
}

Json to_json(const ThetaHat& th) {
  Json j;
  const auto b = th.blocks();
  for (std::size_t i = 0; i < b.size(); ++i) j[kThetaHatBlockNames[i]] = to_json(*b[i]);
  return j;
}

ThetaHat theta_hat_from_json(const Json& j) {
  ThetaHat th;
  auto b = th.blocks();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!j.contains(kThetaHatBlockNames[i])) config_error(std::string("theta_hat misses ") + kThetaHatBlockNames[i]);
    *b[i] = mat_from_json(j.at(kThetaHatBlockNames[i]), std::string("theta_hat.") + kThetaHatBlockNames[i]);
  }
  return th;
}

SupplyRate supply_from_json(const Json& j, Eigen::Index n_d, Eigen::Index n_e) {
  const std::string kind = j.value("kind", std::string("zero"));
  SupplyRate x;
  if (kind == "zero") {
    x = SupplyRate::zero(n_d, n_e);
  } else if (kind == "l2_gain") {
    if (!j.contains("gamma2")) config_error("supply l2_gain needs \"gamma2\"");
    x = SupplyRate::l2_gain(j.at("gamma2").get<double>(), n_d, n_e);
  } else if (kind == "matrix") {
    if (!j.contains("X")) config_error("supply matrix needs \"X\"");
    x = SupplyRate::from_matrix(mat_from_json(j.at("X"), "supply.X"), index_field(j, "n_d", n_d));
  } else {
    config_error("unknown supply kind \"" + kind + "\"");
  }
  if (x.n_d() != n_d || x.n_e() != n_e) {
    config_error("supply rate covers n_d=" + std::to_string(x.n_d()) + ", n_e=" + std::to_string(x.n_e()) +
                 " but the plant has n_d=" + std::to_string(n_d) + ", n_e=" + std::to_string(n_e));
  }
  return x;
}

IqcSpec iqc_from_json(const Json& j) {
  const std::string kind = j.value("kind", std::string("static"));
  if (kind == "dynamic") {
    if (!j.contains("psi1") || !j.contains("psi2")) config_error("dynamic iqc needs \"psi1\" and \"psi2\"");
    return IqcSpec::dynamic(state_space_from_json(j.at("psi1"), "iqc.psi1"), state_space_from_json(j.at("psi2"), "iqc.psi2"));
  }
  if (!j.contains("M")) config_error("iqc needs \"M\"");
  const Mat m = mat_from_json(j.at("M"), "iqc.M");
  const Eigen::Index nv = index_field(j, "n_v", m.rows() / 2);
  return IqcSpec::quadratic(m, nv, iqc_kind_from_string(kind));
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t at = std::min(e.byte > 0 ? e.byte - 1 : 0, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    config_error(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

}  // namespace dissipic
