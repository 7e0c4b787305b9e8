#include "xpcg/nn/weights_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xpcg/hash.hpp"

namespace xpcg::nn {
namespace {

constexpr char kMagic[8] = {'X', 'P', 'C', 'G', 'N', 'N', 'W', '1'};

static_assert(std::endian::native == std::endian::little, "weight files are written little-endian");

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw validation_error("InvalidWeightFile", "truncated weight file");
  return v;
}

}  // namespace

void save_weights(const std::string& path, std::uint64_t spec_hash, const std::vector<const Tensor<float>*>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, spec_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (int d : t->shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "failed writing " + path);
}

WeightFile load_weights(const std::string& path, std::uint64_t expected_hash, bool allow_mismatch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::NotFound, "FileNotFound", "cannot open " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw validation_error("InvalidWeightFile", path + " is not an xpcg weight file");
  }
  WeightFile file;
  file.spec_hash = get<std::uint64_t>(in);
  if (file.spec_hash != expected_hash && !allow_mismatch) {
    throw validation_error("SpecMismatch", "weight file architecture " + hex64(file.spec_hash) +
                                               " does not match " + hex64(expected_hash));
  }
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw validation_error("InvalidWeightFile", "implausible tensor rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(get<std::uint32_t>(in)));
    Tensor<float> t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw validation_error("InvalidWeightFile", "truncated tensor data");
    }
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace xpcg::nn
