#include "bridgestain/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "bridgestain/error.hpp"
#include "bridgestain/tensor_io.hpp"
#include "json_io.hpp"

namespace bridgestain {

namespace {

constexpr std::array<char, 4> kMagic{'B', 'T', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(is), ErrorCode::io, "truncated checkpoint");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

std::string get_bytes(std::istream& is, std::uint32_t n) {
  std::string s(n, '\0');
  is.read(s.data(), n);
  require(static_cast<bool>(is), ErrorCode::io, "truncated checkpoint");
  return s;
}

}  // namespace

const NamedBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const json meta{{"model", to_json_value(ckpt.spec)},
                  {"step", ckpt.step},
                  {"seed", ckpt.seed},
                  {"target_stats", to_json_value(ckpt.target_stats)},
                  {"input_stats", to_json_value(ckpt.input_stats)}};
  const std::string text = meta.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorCode::io, "cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(os, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& b : ckpt.blobs) {
    put_u32(os, static_cast<std::uint32_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    write_tensor(os, b.value);
  }
  require(static_cast<bool>(os), ErrorCode::io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::not_found, "cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  require(is && std::memcmp(magic, kMagic.data(), 4) == 0, ErrorCode::incompatible_checkpoint,
          path.string() + " is not a checkpoint");
  const std::uint32_t version = get_u32(is);
  require(version == kCheckpointVersion, ErrorCode::incompatible_checkpoint,
          "unsupported checkpoint version " + std::to_string(version));
  const std::string text = get_bytes(is, get_u32(is));
  Checkpoint ckpt;
  try {
    const json meta = json::parse(text);
    ckpt.spec = model_spec_from(meta.at("model"));
    ckpt.step = meta.at("step").get<std::int64_t>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.target_stats = stats_from(meta.at("target_stats"));
    ckpt.input_stats = stats_from(meta.at("input_stats"));
  } catch (const json::exception& e) {
    fail(ErrorCode::incompatible_checkpoint, std::string("bad checkpoint metadata: ") + e.what());
  }
  const std::uint32_t count = get_u32(is);
  ckpt.blobs.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedBlob b;
    b.name = get_bytes(is, get_u32(is));
    b.value = read_tensor(is);
    ckpt.blobs.push_back(std::move(b));
  }
  return ckpt;
}

template <typename S>
NamedBlob to_blob(const std::string& name, const nn::Matrix<S>& m) {
  ImageTensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1,
                Semantics::normalized_latent,
                {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t.at(static_cast<int>(r), static_cast<int>(c), 0) = static_cast<double>(m(r, c));
    }
  }
  return {name, std::move(t)};
}

template <typename S>
void from_blob(const NamedBlob& blob, nn::Matrix<S>& m) {
  const ImageTensor& t = blob.value;
  require(t.height() == m.rows() && t.width() == m.cols() && t.channels() == 1,
          ErrorCode::incompatible_checkpoint,
          "blob " + blob.name + " has shape " + t.shape_string() + ", expected " +
              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<S>(static_cast<float>(t.at(static_cast<int>(r), static_cast<int>(c), 0)));
    }
  }
}

template <typename S>
void export_parameters(nn::DiffusionModel<S>& model, Checkpoint& ckpt) {
  for (auto* p : model.all_params()) ckpt.blobs.push_back(to_blob(p->name, p->value));
}

template <typename S>
void import_parameters(const Checkpoint& ckpt, nn::DiffusionModel<S>& model) {
  for (auto* p : model.all_params()) {
    const NamedBlob* b = ckpt.find(p->name);
    require(b != nullptr, ErrorCode::incompatible_checkpoint,
            "checkpoint has no parameter " + p->name);
    from_blob(*b, p->value);
  }
}

template NamedBlob to_blob<float>(const std::string&, const nn::Matrix<float>&);
template NamedBlob to_blob<double>(const std::string&, const nn::Matrix<double>&);
template void from_blob<float>(const NamedBlob&, nn::Matrix<float>&);
template void from_blob<double>(const NamedBlob&, nn::Matrix<double>&);
template void export_parameters<float>(nn::DiffusionModel<float>&, Checkpoint&);
template void export_parameters<double>(nn::DiffusionModel<double>&, Checkpoint&);
template void import_parameters<float>(const Checkpoint&, nn::DiffusionModel<float>&);
template void import_parameters<double>(const Checkpoint&, nn::DiffusionModel<double>&);

}  // namespace bridgestain
