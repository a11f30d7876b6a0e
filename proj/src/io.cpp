#include "dpt/io.hpp"

#include <cstring>
#include <fstream>

namespace dpt {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'T', 'E', 'N', 'S', '1', '\0'};
constexpr int kMaxRank = 8;

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

uint32_t get_u32(const unsigned char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_scalar(std::string& buf, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void put_scalar(std::string& buf, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(buf, bits);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

struct ParsedHeader {
  TensorHeader h;
  size_t payload_offset;
  int64_t numel;
};

ParsedHeader parse_header(const std::string& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError(path.string() + ": missing tensor container magic");
  auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  uint8_t dt = p[8];
  uint8_t rank = p[9];
  if (dt > 1) throw FormatError(path.string() + ": unknown dtype tag " + std::to_string(dt));
  if (rank < 1 || rank > kMaxRank)
    throw FormatError(path.string() + ": rank " + std::to_string(rank) + " outside 1..8");
  size_t need = 10 + 8ull * rank;
  if (bytes.size() < need) throw FormatError(path.string() + ": truncated extent table");
  ParsedHeader out;
  out.h.dtype = static_cast<DType>(dt);
  out.numel = 1;
  for (int i = 0; i < rank; ++i) {
    uint64_t e = get_u64(p + 10 + 8 * i);
    if (e == 0 || e > (1ull << 40))
      throw FormatError(path.string() + ": invalid extent " + std::to_string(e));
    out.h.shape.push_back(static_cast<int64_t>(e));
    out.numel *= static_cast<int64_t>(e);
  }
  size_t scalar = out.h.dtype == DType::F32 ? 4 : 8;
  if (bytes.size() != need + scalar * static_cast<size_t>(out.numel))
    throw FormatError(path.string() + ": payload size does not match header (" +
                      std::to_string(bytes.size() - need) + " bytes for " +
                      std::to_string(out.numel) + " scalars)");
  out.payload_offset = need;
  return out;
}

}  // namespace

template <class T>
void write_tensor(const std::filesystem::path& path, const TensorT<T>& t, DType as) {
  if (!t.defined()) throw ArgumentError("cannot write an undefined tensor");
  std::string buf;
  buf.reserve(10 + 8 * t.shape().size() +
              (as == DType::F32 ? 4 : 8) * static_cast<size_t>(t.numel()));
  buf.append(kMagic, 8);
  buf.push_back(static_cast<char>(as));
  buf.push_back(static_cast<char>(t.rank()));
  for (int64_t e : t.shape()) put_u64(buf, static_cast<uint64_t>(e));
  const T* d = t.data();
  if (as == DType::F32)
    for (int64_t i = 0; i < t.numel(); ++i) put_scalar(buf, static_cast<float>(d[i]));
  else
    for (int64_t i = 0; i < t.numel(); ++i) put_scalar(buf, static_cast<double>(d[i]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

TensorHeader peek_tensor(const std::filesystem::path& path) {
  return parse_header(read_all(path), path).h;
}

template <class T>
TensorT<T> read_tensor(const std::filesystem::path& path, bool allow_narrow) {
  std::string bytes = read_all(path);
  ParsedHeader ph = parse_header(bytes, path);
  if (ph.h.dtype == DType::F64 && sizeof(T) == 4 && !allow_narrow)
    throw FormatError(path.string() + ": refusing to narrow f64 payload to f32");
  std::vector<T> data(static_cast<size_t>(ph.numel));
  auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + ph.payload_offset;
  if (ph.h.dtype == DType::F32) {
    for (int64_t i = 0; i < ph.numel; ++i) {
      uint32_t bits = get_u32(p + 4 * i);
      float x;
      std::memcpy(&x, &bits, 4);
      data[static_cast<size_t>(i)] = static_cast<T>(x);
    }
  } else {
    for (int64_t i = 0; i < ph.numel; ++i) {
      uint64_t bits = get_u64(p + 8 * i);
      double x;
      std::memcpy(&x, &bits, 8);
      data[static_cast<size_t>(i)] = static_cast<T>(x);
    }
  }
  return TensorT<T>(ph.h.shape, std::move(data));
}

template void write_tensor<float>(const std::filesystem::path&, const TensorT<float>&, DType);
template void write_tensor<double>(const std::filesystem::path&, const TensorT<double>&, DType);
template TensorT<float> read_tensor<float>(const std::filesystem::path&, bool);
template TensorT<double> read_tensor<double>(const std::filesystem::path&, bool);

}  // namespace dpt
