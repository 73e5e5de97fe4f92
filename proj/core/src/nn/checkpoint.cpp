#include "magniflow/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "magniflow/errors.hpp"

namespace magniflow::nn {

namespace {

constexpr char kMagic[8] = {'M', 'G', 'F', 'L', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_blob(std::string& out, const std::vector<Real>& values) {
  std::vector<float> f(values.begin(), values.end());
  out.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
}

void read_blob(const std::string& payload, std::size_t offset, std::span<Real> dst) {
  if (offset + dst.size() * sizeof(float) > payload.size()) throw CheckpointError("checkpoint: truncated tensor data");
  std::vector<float> f(dst.size());
  std::memcpy(f.data(), payload.data() + offset, f.size() * sizeof(float));
  std::copy(f.begin(), f.end(), dst.begin());
}

struct Archive {
  nlohmann::json header;
  std::string payload;
};

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t header_len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("checkpoint: bad magic in " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("checkpoint: truncated header");
  Archive a;
  try {
    a.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  a.payload.assign(std::istreambuf_iterator<char>(in), {});
  if (a.header.value("format_version", -1) != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version");
  }
  return a;
}

CheckpointMeta meta_from(const nlohmann::json& h) {
  CheckpointMeta m;
  m.master_seed = h.at("master_seed").get<std::uint64_t>();
  m.kind = h.value("kind", "");
  m.config_json = h.value("config", nlohmann::json::object()).dump();
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta) {
  nlohmann::json h;
  h["format_version"] = kCheckpointVersion;
  h["master_seed"] = meta.master_seed;
  h["kind"] = meta.kind;
  h["config"] = meta.config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta.config_json);
  h["step"] = params.step;
  h["dtype"] = "float32-le";
  std::string payload;
  auto tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    nlohmann::json t;
    t["name"] = params.names[i];
    t["shape"] = params.params[i].shape();
    t["offset"] = payload.size();
    append_blob(payload, std::vector<Real>(params.params[i].data().begin(), params.params[i].data().end()));
    t["m_offset"] = payload.size();
    append_blob(payload, params.first_moment[i]);
    t["v_offset"] = payload.size();
    append_blob(payload, params.second_moment[i]);
    tensors.push_back(std::move(t));
  }
  h["tensors"] = std::move(tensors);
  const std::string header = h.dump();
  const std::uint64_t len = header.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) { return meta_from(read_archive(path).header); }

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  const Archive a = read_archive(path);
  const auto& tensors = a.header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    if (name != params.names[i] || shape != params.params[i].shape()) {
      throw CheckpointError("checkpoint: tensor " + name + " " + to_string(shape) + " does not match model tensor " +
                            params.names[i] + " " + to_string(params.params[i].shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    read_blob(a.payload, t.at("offset").get<std::size_t>(), params.params[i].mutable_data());
    read_blob(a.payload, t.at("m_offset").get<std::size_t>(), params.first_moment[i]);
    read_blob(a.payload, t.at("v_offset").get<std::size_t>(), params.second_moment[i]);
    params.params[i].zero_grad();
  }
  params.step = a.header.at("step").get<std::int64_t>();
  return meta_from(a.header);
}

}  // namespace magniflow::nn
