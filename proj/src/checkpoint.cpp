#include "posepyr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace posepyr {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename U>
  void pod(U v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void scalars(const std::vector<double>& v, int width) {
    if (width == 8) {
      out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
      return;
    }
    std::vector<float> f(v.begin(), v.end());
    out_.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename U>
  U pod() {
    U v{};
    read(reinterpret_cast<char*>(&v), sizeof(U));
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::vector<double> scalars(std::size_t n, int width) {
    if (width == 8) {
      std::vector<double> v(n);
      read(reinterpret_cast<char*>(v.data()), n * 8);
      return v;
    }
    std::vector<float> f(n);
    read(reinterpret_cast<char*>(f.data()), n * 4);
    return {f.begin(), f.end()};
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw std::runtime_error(path_ + ": truncated checkpoint");
  }

  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (archive.scalar_bytes != 4 && archive.scalar_bytes != 8) {
    throw std::invalid_argument("write_archive: scalar width must be 4 or 8 bytes");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    Writer w(out);
    w.bytes(kCheckpointMagic);
    w.bytes("\n");
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(archive.scalar_bytes));
    w.pod<std::uint64_t>(archive.step);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(archive.meta.size()));
    w.bytes(archive.meta);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(archive.entries.size()));
    for (const auto& e : archive.entries) {
      if (e.values.size() != static_cast<std::size_t>(shape_numel(e.shape))) {
        throw std::invalid_argument("write_archive: entry '" + e.name + "' value count does not match its shape");
      }
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.kind));
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
      w.bytes(e.name);
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
      for (Index d : e.shape) w.pod<std::uint64_t>(static_cast<std::uint64_t>(d));
      w.scalars(e.values, archive.scalar_bytes);
      if (e.kind == EntryKind::kParameter) {
        w.pod<std::uint64_t>(static_cast<std::uint64_t>(e.adam_step));
        std::vector<double> m = e.adam_m, v = e.adam_v;
        m.resize(e.values.size(), 0.0);
        v.resize(e.values.size(), 0.0);
        w.scalars(m, archive.scalar_bytes);
        w.scalars(v, archive.scalar_bytes);
      }
    }
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  Reader r(in, path.string());
  const std::string magic = r.bytes(kCheckpointMagic.size() + 1);
  if (magic != std::string(kCheckpointMagic) + "\n") {
    throw std::runtime_error(path.string() + ": not a POSEPYR-CKPT-1 archive");
  }
  Archive a;
  a.scalar_bytes = static_cast<int>(r.pod<std::uint32_t>());
  if (a.scalar_bytes != 4 && a.scalar_bytes != 8) throw std::runtime_error(path.string() + ": bad scalar width");
  a.step = r.pod<std::uint64_t>();
  a.meta = r.bytes(r.pod<std::uint32_t>());
  const auto count = r.pod<std::uint32_t>();
  a.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const auto kind = r.pod<std::uint8_t>();
    if (kind > 1) throw std::runtime_error(path.string() + ": unknown entry kind");
    e.kind = static_cast<EntryKind>(kind);
    e.name = r.bytes(r.pod<std::uint32_t>());
    const auto ndim = r.pod<std::uint32_t>();
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(static_cast<Index>(r.pod<std::uint64_t>()));
    const auto n = static_cast<std::size_t>(shape_numel(e.shape));
    e.values = r.scalars(n, a.scalar_bytes);
    if (e.kind == EntryKind::kParameter) {
      e.adam_step = static_cast<std::int64_t>(r.pod<std::uint64_t>());
      e.adam_m = r.scalars(n, a.scalar_bytes);
      e.adam_v = r.scalars(n, a.scalar_bytes);
    }
    a.entries.push_back(std::move(e));
  }
  return a;
}

}  // namespace posepyr
