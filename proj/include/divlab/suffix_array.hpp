#ifndef DIVLAB_SUFFIX_ARRAY_HPP
#define DIVLAB_SUFFIX_ARRAY_HPP

#include <vector>

namespace divlab {

// Suffix array of `text` over symbols in [0, alphabet), by prefix doubling
// with radix sorting. O(n log n).
std::vector<int> BuildSuffixArray(const std::vector<int>& text, int alphabet);

// lcp[i] = length of the longest common prefix of suffixes sa[i-1] and
// sa[i]; lcp[0] = 0 (Kasai et al.).
std::vector<int> BuildLcpArray(const std::vector<int>& text, const std::vector<int>& sa);

}  // namespace divlab

#endif  // DIVLAB_SUFFIX_ARRAY_HPP
