#include "rvseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace rvseg::ckpt {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'I', 'G', 'A', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::size_t elem_size(Tag t) {
  switch (t) {
    case Tag::f32: return 4;
    case Tag::f64: return 8;
    case Tag::u8: return 1;
    case Tag::u64: return 8;
    case Tag::i64: return 8;
  }
  return 1;
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw IoError(path + ": truncated checkpoint (" + what + ") at byte offset " +
                    std::to_string(pos));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace

std::size_t Entry::payload_count() const { return payload.size() / elem_size(tag); }

Entry make_f32(const std::string& name, std::span<const float> values,
               std::vector<std::uint32_t> shape) {
  Entry e;
  e.name = name;
  e.tag = Tag::f32;
  e.shape = std::move(shape);
  e.payload.reserve(values.size() * 4);
  for (float v : values) put_u32(e.payload, std::bit_cast<std::uint32_t>(v));
  return e;
}

Entry make_f64(const std::string& name, std::span<const double> values) {
  Entry e;
  e.name = name;
  e.tag = Tag::f64;
  e.shape = {static_cast<std::uint32_t>(values.size())};
  for (double v : values) put_u64(e.payload, std::bit_cast<std::uint64_t>(v));
  return e;
}

Entry make_u64(const std::string& name, std::uint64_t value) {
  Entry e;
  e.name = name;
  e.tag = Tag::u64;
  e.shape = {1};
  put_u64(e.payload, value);
  return e;
}

Entry make_i64(const std::string& name, std::int64_t value) {
  Entry e;
  e.name = name;
  e.tag = Tag::i64;
  e.shape = {1};
  put_u64(e.payload, static_cast<std::uint64_t>(value));
  return e;
}

Entry make_bytes(const std::string& name, const std::string& bytes) {
  Entry e;
  e.name = name;
  e.tag = Tag::u8;
  e.shape = {static_cast<std::uint32_t>(bytes.size())};
  e.payload = bytes;
  return e;
}

namespace {
std::uint32_t read_u32_at(const std::string& p, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[off + i])) << (8 * i);
  return v;
}
std::uint64_t read_u64_at(const std::string& p, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[off + i])) << (8 * i);
  return v;
}
}  // namespace

std::vector<float> as_f32(const Entry& e) {
  if (e.tag != Tag::f32) throw IoError("checkpoint entry " + e.name + " is not f32");
  std::vector<float> out(e.payload_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<float>(read_u32_at(e.payload, i * 4));
  return out;
}

double as_f64_scalar(const Entry& e) {
  if (e.tag != Tag::f64 || e.payload.size() != 8)
    throw IoError("checkpoint entry " + e.name + " is not a scalar f64");
  return std::bit_cast<double>(read_u64_at(e.payload, 0));
}

std::uint64_t as_u64_scalar(const Entry& e) {
  if (e.tag != Tag::u64 || e.payload.size() != 8)
    throw IoError("checkpoint entry " + e.name + " is not a scalar u64");
  return read_u64_at(e.payload, 0);
}

std::int64_t as_i64_scalar(const Entry& e) {
  if (e.tag != Tag::i64 || e.payload.size() != 8)
    throw IoError("checkpoint entry " + e.name + " is not a scalar i64");
  return static_cast<std::int64_t>(read_u64_at(e.payload, 0));
}

void write_file(const std::filesystem::path& path, const std::vector<Entry>& entries) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const Entry& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    out.push_back(static_cast<char>(e.tag));
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::uint32_t d : e.shape) put_u32(out, d);
    put_u64(out, e.payload.size());
    out.append(e.payload);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure on checkpoint " + path.string());
}

std::vector<Entry> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  Reader r;
  r.path = path.string();
  r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  r.need(8, "magic");
  if (std::memcmp(r.bytes.data(), kMagic, 8) != 0)
    throw IoError(r.path + ": bad checkpoint magic at byte offset 0");
  r.pos = 8;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw IoError(r.path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32("entry count");
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const std::uint32_t name_len = r.u32("entry name length");
    r.need(name_len, "entry name");
    e.name.assign(r.bytes, r.pos, name_len);
    r.pos += name_len;
    r.need(1, "entry tag");
    const auto tag = static_cast<std::uint8_t>(r.bytes[r.pos++]);
    if (tag > 4) throw IoError(r.path + ": unknown dtype tag in entry " + e.name);
    e.tag = static_cast<Tag>(tag);
    const std::uint32_t ndim = r.u32("entry rank");
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(r.u32("entry shape"));
    const std::uint64_t len = r.u64("payload length");
    r.need(len, ("payload of " + e.name).c_str());
    e.payload.assign(r.bytes, r.pos, len);
    r.pos += len;
    std::uint64_t numel = 1;
    for (std::uint32_t d : e.shape) numel *= d;
    if (numel * elem_size(e.tag) != len)
      throw IoError(r.path + ": entry " + e.name + " payload length " +
                    std::to_string(len) + " does not match its shape");
    entries.push_back(std::move(e));
  }
  if (r.pos != r.bytes.size())
    throw IoError(r.path + ": trailing bytes at offset " + std::to_string(r.pos));
  return entries;
}

}  // namespace rvseg::ckpt
