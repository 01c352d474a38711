#include "glab/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "glab/errors.hpp"

namespace glab {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void doubles(std::span<double> dst, const char* what) {
    need(dst.size() * sizeof(double), what);
    std::memcpy(dst.data(), bytes_.data() + pos_, dst.size() * sizeof(double));
    pos_ += dst.size() * sizeof(double);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (n > remaining()) {
      throw FormatError(std::string("truncated container while reading ") + what, pos_);
    }
  }

  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_container(std::string_view magic, const std::vector<NamedTensor>& entries) {
  std::vector<char> out(magic.begin(), magic.end());
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put<std::uint64_t>(out, d);
    const auto data = e.value.data();
    const auto* p = reinterpret_cast<const char*>(data.data());
    out.insert(out.end(), p, p + data.size() * sizeof(double));
  }
  return out;
}

std::vector<NamedTensor> decode_container(std::string_view magic, const std::vector<char>& bytes) {
  Reader in(bytes);
  const std::string got = in.string(magic.size(), "magic");
  if (got != magic) throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", 0);
  const std::size_t version_at = in.pos();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw VersionError("unsupported container version " + std::to_string(version), version_at);
  }
  const auto count = in.get<std::uint32_t>("entry count");
  std::vector<NamedTensor> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    const auto name_len = in.get<std::uint32_t>("name length");
    e.name = in.string(name_len, "name");
    const std::size_t rank_at = in.pos();
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::size_t dim_at = in.pos();
      const auto d = in.get<std::uint64_t>("dimension");
      if (d == 0) throw FormatError("zero dimension in entry \"" + e.name + "\"", dim_at);
      total *= d;
      if (total > in.remaining() / sizeof(double) + 1) {
        throw FormatError("entry \"" + e.name + "\" larger than the file", dim_at);
      }
      shape.push_back(static_cast<std::size_t>(d));
    }
    e.value = Tensor(shape);
    in.doubles(e.value.data(), "tensor values");
    entries.push_back(std::move(e));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after last entry", in.pos());
  return entries;
}

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::vector<NamedTensor>& entries) {
  const auto bytes = encode_container(magic, entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(magic, bytes);
}

std::uint64_t fingerprint(const std::vector<NamedTensor>& entries) {
  const auto bytes = encode_container("", entries);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace glab
