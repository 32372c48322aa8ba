#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samint/model.hpp"
#include "samint/path.hpp"
#include "samint/splines.hpp"
#include "samint/util.hpp"

namespace samint {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelMagic = "SAMINT-MODEL";

struct Provenance {
  long seed = 0;
  std::string data_hash;       // FNV-1a of the training CSV bytes
  std::string timestamp;       // SOURCE_DATE_EPOCH if set, else empty
  std::string response_column;
  std::string command;
  std::vector<int> support_order;  // mains by entry order along the path
};

struct ModelArchive {
  int format_version = kModelFormatVersion;
  AdditiveModel model;
  Provenance provenance;
};

// Deterministic timestamp: honors SOURCE_DATE_EPOCH, never the wall clock,
// so identical runs produce identical archives.
inline std::string archive_timestamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  return epoch ? std::string(epoch) : std::string();
}

namespace detail {

inline nlohmann::json hex_array(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(double_to_hex(v[i]));
  return a;
}

inline Eigen::VectorXd hex_vector(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  Eigen::Index i = 0;
  for (const auto& item : a) v[i++] = hex_to_double(item.get<std::string>());
  return v;
}

}  // namespace detail

inline std::string serialize_model(const AdditiveModel& model,
                                   const Provenance& provenance) {
  if (!model.context || !model.context->core)
    throw UsageError("cannot archive a model without its context");
  const ModelContextCore& core = *model.context->core;
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["provenance"] = {{"seed", provenance.seed},
                     {"data_hash", provenance.data_hash},
                     {"timestamp", provenance.timestamp},
                     {"response_column", provenance.response_column},
                     {"command", provenance.command}};
  j["support_order"] = provenance.support_order;
  j["config"] = {{"degree", core.config.degree},
                 {"knots_main", core.config.n_knots_main},
                 {"knots_interaction", core.config.n_knots_interaction_per_axis},
                 {"placement", to_string(core.config.knot_placement)}};
  j["feature_names"] = core.feature_names;
  j["standardizer"] = {{"means", detail::hex_array(core.standardizer.means)},
                       {"stdevs", detail::hex_array(core.standardizer.stdevs)}};
  j["y_mean"] = double_to_hex(core.y_mean);
  nlohmann::json mk = nlohmann::json::array(), ik = nlohmann::json::array();
  for (const auto& k : core.main_knots) mk.push_back(detail::hex_array(k));
  for (const auto& k : core.interaction_knots) ik.push_back(detail::hex_array(k));
  j["main_knots"] = std::move(mk);
  j["interaction_knots"] = std::move(ik);
  j["params"] = {{"lambda1", double_to_hex(model.params.lambda1)},
                 {"lambda2", double_to_hex(model.params.lambda2)},
                 {"alpha", double_to_hex(model.params.alpha)}};
  j["intercept"] = double_to_hex(model.intercept);
  j["converged"] = model.converged;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& [idx, coef] : model.coefficients) {
    auto cm = model.context->block_col_means.find(idx);
    if (cm == model.context->block_col_means.end())
      throw UsageError("model context lacks column means for " + idx.label());
    blocks.push_back({{"j", idx.j},
                      {"k", idx.is_interaction() ? idx.k : -1},
                      {"coef", detail::hex_array(coef)},
                      {"col_means", detail::hex_array(cm->second)}});
  }
  j["blocks"] = std::move(blocks);

  std::string payload = j.dump() + "\n";
  std::ostringstream os;
  os << kModelMagic << "\n";
  os << "version " << kModelFormatVersion << "\n";
  os << "checksum " << to_hex(fnv1a64(payload)) << "\n";
  os << payload;
  return os.str();
}

inline void save_model(const AdditiveModel& model, const std::string& path,
                       const Provenance& provenance = Provenance()) {
  write_text_file(path, serialize_model(model, provenance));
}

inline ModelArchive deserialize_model(const std::string& text) {
  std::istringstream is(text);
  std::string magic, word;
  if (!std::getline(is, magic) || magic != kModelMagic)
    throw DataError("not a model archive (bad magic)");
  int version = -1;
  std::string line;
  if (!std::getline(is, line) || std::sscanf(line.c_str(), "version %d", &version) != 1)
    throw DataError("model archive: missing version line");
  if (version != kModelFormatVersion)
    throw DataError("unsupported model format version " + std::to_string(version) +
                    " (this build reads version " +
                    std::to_string(kModelFormatVersion) + ")");
  if (!std::getline(is, line) || line.rfind("checksum ", 0) != 0)
    throw DataError("model archive: missing checksum line");
  std::string stored = line.substr(9);
  std::string payload(std::istreambuf_iterator<char>(is), {});
  if (to_hex(fnv1a64(payload)) != stored)
    throw DataError("model archive: checksum mismatch (file truncated or corrupted)");

  nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
  if (j.is_discarded()) throw DataError("model archive: malformed payload");

  ModelArchive archive;
  archive.format_version = version;
  const auto& prov = j.at("provenance");
  archive.provenance.seed = prov.at("seed").get<long>();
  archive.provenance.data_hash = prov.at("data_hash").get<std::string>();
  archive.provenance.timestamp = prov.at("timestamp").get<std::string>();
  archive.provenance.response_column = prov.at("response_column").get<std::string>();
  archive.provenance.command = prov.at("command").get<std::string>();
  archive.provenance.support_order = j.at("support_order").get<std::vector<int>>();

  auto core = std::make_shared<ModelContextCore>();
  const auto& cfg = j.at("config");
  core->config.degree = cfg.at("degree").get<int>();
  core->config.n_knots_main = cfg.at("knots_main").get<int>();
  core->config.n_knots_interaction_per_axis = cfg.at("knots_interaction").get<int>();
  core->config.knot_placement =
      knot_placement_from_string(cfg.at("placement").get<std::string>());
  core->feature_names = j.at("feature_names").get<std::vector<std::string>>();
  core->standardizer.means = detail::hex_vector(j.at("standardizer").at("means"));
  core->standardizer.stdevs = detail::hex_vector(j.at("standardizer").at("stdevs"));
  core->y_mean = hex_to_double(j.at("y_mean").get<std::string>());
  for (const auto& k : j.at("main_knots"))
    core->main_knots.push_back(detail::hex_vector(k));
  for (const auto& k : j.at("interaction_knots"))
    core->interaction_knots.push_back(detail::hex_vector(k));

  auto context = std::make_shared<ModelContext>();
  AdditiveModel& model = archive.model;
  const auto& params = j.at("params");
  model.params.lambda1 = hex_to_double(params.at("lambda1").get<std::string>());
  model.params.lambda2 = hex_to_double(params.at("lambda2").get<std::string>());
  model.params.alpha = hex_to_double(params.at("alpha").get<std::string>());
  model.intercept = hex_to_double(j.at("intercept").get<std::string>());
  model.converged = j.at("converged").get<bool>();
  for (const auto& blk : j.at("blocks")) {
    int bj = blk.at("j").get<int>();
    int bk = blk.at("k").get<int>();
    BlockIndex idx = bk < 0 ? BlockIndex::main(bj) : BlockIndex::pair(bj, bk);
    model.coefficients[idx] = detail::hex_vector(blk.at("coef"));
    context->block_col_means[idx] = detail::hex_vector(blk.at("col_means"));
  }
  context->core = std::move(core);
  model.context = std::move(context);
  return archive;
}

inline ModelArchive load_model(const std::string& path) {
  return deserialize_model(read_text_file(path));
}

inline std::string grid_summary_csv(const PathGrid& grid) {
  std::ostringstream os;
  os << "lambda1,lambda2,n_main,n_interaction,train_rmse,val_rmse,val_mae\n";
  for (int l = 0; l < grid.n_lambda1(); ++l)
    for (int m = 0; m < grid.n_lambda2(); ++m) {
      std::size_t at = grid.node(l, m);
      if (!grid.models[at]) continue;
      const NodeMetrics& nm = grid.metrics[at];
      os << format_double(grid.lambda1_values[static_cast<std::size_t>(l)]) << ","
         << format_double(grid.lambda2_values[static_cast<std::size_t>(m)]) << ","
         << nm.n_main << "," << nm.n_interaction << ","
         << format_double(nm.train_rmse) << "," << format_double(nm.val_rmse) << ","
         << format_double(nm.val_mae) << "\n";
    }
  return os.str();
}

inline void save_grid_summary(const PathGrid& grid, const std::string& path) {
  write_text_file(path, grid_summary_csv(grid));
}

}  // namespace samint
