#include "crowdnav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace crowdnav {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'W', 'D', 'N', 'A', 'V', '\0'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return value;
}

}  // namespace

const nn::Matrix<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return true;
  }
  return false;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string header = nlohmann::json{{"metadata", ckpt.metadata}, {"tensors", manifest}}.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& t : ckpt.tensors) {
    const nn::Matrix<float>& m = t.second;
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  }
  put_le<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < pos + 8 + 8) throw CheckpointError("checkpoint truncated");
  std::size_t tail = bytes.size() - 8;
  std::size_t tail_pos = tail;
  const auto stored_sum = get_le<std::uint64_t>(bytes, tail_pos);
  if (fnv1a(bytes.data(), tail) != stored_sum) throw CheckpointError("checkpoint corrupt or truncated (checksum mismatch)");

  const auto header_size = get_le<std::uint64_t>(bytes, pos);
  if (header_size > tail - pos) throw CheckpointError("checkpoint truncated (header)");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_size));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header unreadable: ") + e.what());
  }
  pos += header_size;

  Checkpoint ckpt;
  ckpt.metadata = header.at("metadata");
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw CheckpointError("checkpoint has a negative tensor shape");
    nn::Matrix<float> m(rows, cols);
    if (static_cast<std::size_t>(m.size()) * 4 > tail - pos) throw CheckpointError("checkpoint truncated (tensor data)");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  if (pos != tail) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_checkpoint(buf.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed checkpoint header: " + e.what());
  }
}

}  // namespace crowdnav
