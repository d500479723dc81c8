#pragma once

#include "posepyr/optim.hpp"
#include "posepyr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace posepyr {

/// Magic line opening every archive file.
inline constexpr std::string_view kCheckpointMagic = "POSEPYR-CKPT-1";

enum class EntryKind : std::uint8_t { kParameter = 0, kBuffer = 1 };

/// One named tensor. Values are held as double in memory and written at the
/// archive's scalar width, so float data round-trips bit for bit.
struct ArchiveEntry {
  EntryKind kind = EntryKind::kBuffer;
  std::string name;
  Shape shape;
  std::vector<double> values;
  std::int64_t adam_step = 0;  // parameters only
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

/// Binary container: parameter name -> shape + raw little-endian scalars,
/// plus optimizer state and free-form metadata text.
///
/// Layout: "POSEPYR-CKPT-1\n", u32 scalar_bytes, u64 step, u32 meta_len, meta,
/// u32 entry_count, then per entry: u8 kind, u32 name_len, name, u32 ndim,
/// u64 dims[ndim], values; parameters additionally carry u64 adam_step, m, v.
struct Archive {
  int scalar_bytes = 4;
  std::uint64_t step = 0;
  std::string meta;
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(std::string_view name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

/// Writes to a temporary sibling and renames into place.
void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

template <typename T>
ArchiveEntry to_entry(const std::string& name, const Tensor<T>& t, EntryKind kind = EntryKind::kBuffer) {
  ArchiveEntry e;
  e.kind = kind;
  e.name = name;
  e.shape = t.shape();
  e.values.assign(t.ptr(), t.ptr() + t.numel());
  return e;
}

template <typename T>
ArchiveEntry to_entry(const Parameter<T>& p) {
  ArchiveEntry e = to_entry(p.name, p.tensor, EntryKind::kParameter);
  e.adam_step = p.adam.step;
  e.adam_m.assign(p.adam.m.data(), p.adam.m.data() + p.adam.m.size());
  e.adam_v.assign(p.adam.v.data(), p.adam.v.data() + p.adam.v.size());
  return e;
}

/// Copies an entry into a tensor of identical shape; throws naming the entry on mismatch.
template <typename T>
void load_entry(const ArchiveEntry& e, Tensor<T>& t) {
  if (e.shape != t.shape()) {
    throw std::invalid_argument("checkpoint entry '" + e.name + "' has shape " + shape_str(e.shape) +
                                " but the model expects " + shape_str(t.shape()));
  }
  for (Index i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(e.values[static_cast<std::size_t>(i)]);
}

template <typename T>
void load_entry(const ArchiveEntry& e, Parameter<T>& p) {
  load_entry(e, p.tensor);
  p.adam.step = e.adam_step;
  if (e.adam_m.size() == static_cast<std::size_t>(p.tensor.numel())) {
    for (Index i = 0; i < p.tensor.numel(); ++i) {
      p.adam.m[i] = static_cast<T>(e.adam_m[static_cast<std::size_t>(i)]);
      p.adam.v[i] = static_cast<T>(e.adam_v[static_cast<std::size_t>(i)]);
    }
  }
}

}  // namespace posepyr
