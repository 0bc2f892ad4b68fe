#include "must/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "must/error.hpp"
#include "must/hash.hpp"

namespace must {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) throw DataError(std::string("checkpoint truncated reading ") + what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t len) {
    if (bytes_.size() - pos_ < len) throw DataError("checkpoint truncated reading name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const NamedParams& params) {
  std::vector<unsigned char> out{'M', 'U', 'S', 'T'};
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.values()) put<double>(out, v);
  }
  return out;
}

NamedParams decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "MUST", 4) != 0)
    throw DataError("not a checkpoint: bad magic");
  Reader r(bytes);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  NamedParams params;
  while (!r.done()) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name = r.get_string(len);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw DataError("checkpoint record '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>("extent"));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.get<double>("payload");
    params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const NamedParams& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NamedParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

void assign_parameters(NamedParams& target, const NamedParams& source) {
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : source) lookup[name] = &t;
  for (auto& [name, t] : target) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
    if (it->second->shape() != t.shape())
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_to_string(it->second->shape()) + ", model expects " +
                      shape_to_string(t.shape()));
    const auto src = it->second->values();
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
  }
}

std::string parameters_hash(const NamedParams& params) { return git_blob_hash(encode_checkpoint(params)); }

}  // namespace must
