#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace fsu {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Mixes a parent seed with a sequence of indices into an independent child
/// seed. Order of the indices matters.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = detail::splitmix64(seed);
  for (std::uint64_t p : path) h = detail::splitmix64(h ^ detail::splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

/// Named sub-seed ("data", "init", "relabel", "attack", "shuffle", ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, {detail::fnv1a(name)});
}

/// Uniform draw from the C-1 classes different from `true_label`.
template <class Gen>
std::size_t draw_wrong_label(std::size_t true_label, std::size_t class_count,
                             Gen& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, class_count - 2);
  std::size_t r = pick(rng);
  return r >= true_label ? r + 1 : r;
}

}  // namespace fsu
