#include "uzlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

namespace uzlm::model {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

void append_f32_le(std::string* out, float value) {
  const uint32_t bits = std::bit_cast<uint32_t>(value);
  out->push_back(static_cast<char>(bits & 0xff));
  out->push_back(static_cast<char>((bits >> 8) & 0xff));
  out->push_back(static_cast<char>((bits >> 16) & 0xff));
  out->push_back(static_cast<char>((bits >> 24) & 0xff));
}

float read_f32_le(const char* p) {
  const uint32_t bits = (static_cast<uint32_t>(static_cast<unsigned char>(p[0]))) |
                        (static_cast<uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
                        (static_cast<uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
                        (static_cast<uint32_t>(static_cast<unsigned char>(p[3])) << 24);
  return std::bit_cast<float>(bits);
}

std::string serialize_tensors(const EncoderState<float>& state, ordered_json* table) {
  std::string payload;
  for (const auto& ref : state.named_tensors()) {
    const Mat<float>& m = *ref.tensor;
    ordered_json entry;
    entry["name"] = ref.name;
    entry["dtype"] = "f32";
    entry["shape"] = {m.rows(), m.cols()};
    entry["byte_offset"] = payload.size();
    entry["byte_length"] = static_cast<size_t>(m.size()) * 4;
    table->push_back(entry);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        append_f32_le(&payload, m(i, j));
      }
    }
  }
  return payload;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["num_layers"] = c.num_layers;
  j["hidden_size"] = c.hidden_size;
  j["num_heads"] = c.num_heads;
  j["ffn_size"] = c.ffn_size;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["segment_types"] = c.segment_types;
  j["dropout_rate"] = c.dropout_rate;
  j["activation"] = c.activation;
  j["initializer_stddev"] = c.initializer_stddev;
  return j;
}

ModelConfig config_from_json(const ordered_json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ffn_size = j.at("ffn_size").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.segment_types = j.at("segment_types").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.activation = j.at("activation").get<std::string>();
  c.initializer_stddev = j.at("initializer_stddev").get<double>();
  return c;
}

void deserialize_tensors(const ordered_json& table, const std::string& payload,
                         const std::string& payload_name, EncoderState<float>* state) {
  auto refs = state->named_tensors();
  if (table.size() != refs.size()) {
    throw CheckpointShapeError("tensor table lists " + std::to_string(table.size()) +
                               " tensors, expected " + std::to_string(refs.size()));
  }
  size_t expected_offset = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const ordered_json& entry = table[i];
    Mat<float>& m = *refs[i].tensor;
    const std::string name = entry.at("name").get<std::string>();
    if (name != refs[i].name) {
      throw CheckpointShapeError("tensor " + std::to_string(i) + " is named '" + name +
                                 "', expected '" + refs[i].name + "'");
    }
    if (entry.at("dtype").get<std::string>() != "f32") {
      throw CheckpointShapeError("tensor '" + name + "' has unsupported dtype");
    }
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw CheckpointShapeError("tensor '" + name + "' shape mismatch");
    }
    const size_t offset = entry.at("byte_offset").get<size_t>();
    const size_t length = entry.at("byte_length").get<size_t>();
    if (offset != expected_offset || length != static_cast<size_t>(m.size()) * 4) {
      throw CheckpointShapeError("tensor '" + name + "' has inconsistent byte range");
    }
    if (offset + length > payload.size()) {
      throw CheckpointTruncatedError(payload_name + " is truncated at tensor '" + name + "'");
    }
    const char* p = payload.data() + offset;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = read_f32_le(p);
        p += 4;
      }
    }
    expected_offset = offset + length;
  }
  if (payload.size() != expected_offset) {
    throw CheckpointTruncatedError(payload_name + " has " + std::to_string(payload.size()) +
                                   " bytes, manifest expects " +
                                   std::to_string(expected_offset));
  }
}

}  // namespace

void save_checkpoint(const std::string& dir, const EncoderState<float>& state,
                     const PhaseMetadata& meta, const OptimizerSnapshot* optimizer) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["model_config"] = config_to_json(state.config);
  ordered_json phase;
  phase["phase_id"] = meta.phase_id;
  phase["completed_epochs"] = meta.completed_epochs;
  phase["step_in_epoch"] = meta.step_in_epoch;
  phase["global_step"] = meta.global_step;
  phase["rng_seed"] = meta.rng_seed;
  manifest["phase"] = phase;
  ordered_json table = ordered_json::array();
  const std::string payload = serialize_tensors(state, &table);
  manifest["tensors"] = table;
  if (optimizer != nullptr) {
    ordered_json opt;
    opt["step"] = optimizer->step;
    ordered_json m_table = ordered_json::array();
    ordered_json v_table = ordered_json::array();
    std::string opt_payload = serialize_tensors(optimizer->m, &m_table);
    std::string v_payload = serialize_tensors(optimizer->v, &v_table);
    for (auto& entry : v_table) {
      entry["byte_offset"] = entry["byte_offset"].get<size_t>() + opt_payload.size();
    }
    opt_payload += v_payload;
    opt["m_tensors"] = m_table;
    opt["v_tensors"] = v_table;
    manifest["optimizer"] = opt;
    write_file(fs::path(dir) / "optim.bin", opt_payload);
  } else {
    manifest["optimizer"] = nullptr;
  }
  write_file(fs::path(dir) / "params.bin", payload);
  write_file(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

std::string find_latest_checkpoint(const std::string& parent) {
  if (!fs::exists(parent)) return {};
  int64_t best = -1;
  std::string best_path;
  for (const auto& entry : fs::directory_iterator(parent)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt-", 0) != 0) continue;
    try {
      const int64_t step = std::stoll(name.substr(5));
      if (step > best) {
        best = step;
        best_path = entry.path().string();
      }
    } catch (const std::exception&) {
      continue;
    }
  }
  return best_path;
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const std::string manifest_text = read_file(fs::path(dir) / "manifest.json");
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  const int version = manifest.at("format_version").get<int>();
  if (version != kFormatVersion) {
    throw CheckpointVersionError("unsupported checkpoint format_version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kFormatVersion));
  }
  ModelConfig config = config_from_json(manifest.at("model_config"));
  config.validate();

  LoadedCheckpoint loaded;
  loaded.state = EncoderState<float>::zeros(config);
  const std::string payload = read_file(fs::path(dir) / "params.bin");
  deserialize_tensors(manifest.at("tensors"), payload, "params.bin", &loaded.state);

  const ordered_json& phase = manifest.at("phase");
  loaded.meta.phase_id = phase.at("phase_id").get<int>();
  loaded.meta.completed_epochs = phase.at("completed_epochs").get<int>();
  loaded.meta.step_in_epoch = phase.at("step_in_epoch").get<int64_t>();
  loaded.meta.global_step = phase.at("global_step").get<int64_t>();
  loaded.meta.rng_seed = phase.at("rng_seed").get<uint64_t>();

  if (!manifest.at("optimizer").is_null()) {
    const ordered_json& opt = manifest.at("optimizer");
    OptimizerSnapshot snapshot;
    snapshot.m = EncoderState<float>::zeros(config);
    snapshot.v = EncoderState<float>::zeros(config);
    snapshot.step = opt.at("step").get<int64_t>();
    const std::string opt_payload = read_file(fs::path(dir) / "optim.bin");
    // v entries carry absolute offsets into the shared payload; rebase them
    // for per-table validation.
    deserialize_tensors(opt.at("m_tensors"),
                        opt_payload.substr(0, opt_payload.size() / 2), "optim.bin(m)",
                        &snapshot.m);
    ordered_json v_table = opt.at("v_tensors");
    const size_t half = opt_payload.size() / 2;
    for (auto& entry : v_table) {
      const size_t off = entry["byte_offset"].get<size_t>();
      if (off < half) throw CheckpointTruncatedError("optim.bin v-tensor offsets overlap m");
      entry["byte_offset"] = off - half;
    }
    deserialize_tensors(v_table, opt_payload.substr(half), "optim.bin(v)", &snapshot.v);
    loaded.optimizer = std::move(snapshot);
  }
  return loaded;
}

}  // namespace uzlm::model
