#include "resfeat/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "resfeat/binary_io.hpp"

namespace resfeat {

namespace binary {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace binary

namespace {

constexpr char kMagic[4] = {'R', 'F', 'T', '1'};

void put_floats(binary::Writer& w, const Tensor<float>::Array& a) {
  w.put_bytes(a.data(), static_cast<std::size_t>(a.size()) * sizeof(float));
}

Tensor<float>::Array get_floats(binary::Reader& r, Index n) {
  Tensor<float>::Array a(n);
  std::memcpy(a.data(), r.take(static_cast<std::size_t>(n) * sizeof(float)),
              static_cast<std::size_t>(n) * sizeof(float));
  return a;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  binary::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint8_t>(ckpt.training ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.config_json.size()));
  w.put_bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.parameters.size()));
  for (const auto& p : ckpt.parameters) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("parameter name too long: " + p.name);
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value.rank()));
    for (Index d : p.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    put_floats(w, p.value.values());
    if (ckpt.training) {
      put_floats(w, p.adam_m.values());
      put_floats(w, p.adam_v.values());
      w.put<std::uint64_t>(p.step_count);
    }
  }
  return w.bytes();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  binary::Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic");
  }
  Checkpoint ckpt;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError("checkpoint: unknown kind byte " + std::to_string(kind));
  ckpt.training = kind == 1;
  const auto json_len = r.get<std::uint32_t>();
  ckpt.config_json.assign(r.take(json_len), json_len);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name(r.take(name_len), name_len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape;
    for (int k = 0; k < rank; ++k) shape.push_back(static_cast<Index>(r.get<std::uint32_t>()));
    const Index n = shape_size(shape);
    Parameter<float> p(std::move(name), Tensor<float>(shape, get_floats(r, n)));
    if (ckpt.training) {
      p.adam_m = Tensor<float>(shape, get_floats(r, n));
      p.adam_v = Tensor<float>(shape, get_floats(r, n));
      p.step_count = r.get<std::uint64_t>();
    }
    ckpt.parameters.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  binary::write_file(path.string(), serialize_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(binary::read_file(path.string()));
}

}  // namespace resfeat
