#include "divlab/suffix_array.hpp"

#include <algorithm>
#include <stdexcept>

namespace divlab {

std::vector<int> BuildSuffixArray(const std::vector<int>& text, int alphabet) {
  const int n = static_cast<int>(text.size());
  if (n == 0) return {};
  std::vector<int> sa(n), rank(n), tmp(n);
  std::vector<int> count(static_cast<std::size_t>(std::max(alphabet, n)) + 1, 0);
  for (int c : text) {
    if (c < 0 || c >= alphabet) throw std::out_of_range("symbol outside alphabet");
    ++count[c];
  }
  for (int c = 1; c <= alphabet; ++c) count[c] += count[c - 1];
  for (int i = n - 1; i >= 0; --i) sa[--count[text[i]]] = i;
  rank[sa[0]] = 0;
  for (int i = 1; i < n; ++i) rank[sa[i]] = rank[sa[i - 1]] + (text[sa[i]] != text[sa[i - 1]]);

  for (int k = 1; rank[sa[n - 1]] < n - 1; k <<= 1) {
    // Order by second key: suffixes without a second half first.
    int p = 0;
    for (int i = n - k; i < n; ++i) tmp[p++] = i;
    for (int i = 0; i < n; ++i) {
      if (sa[i] >= k) tmp[p++] = sa[i] - k;
    }
    const int classes = rank[sa[n - 1]] + 1;
    std::fill(count.begin(), count.begin() + classes + 1, 0);
    for (int i = 0; i < n; ++i) ++count[rank[i]];
    for (int c = 1; c < classes; ++c) count[c] += count[c - 1];
    for (int i = n - 1; i >= 0; --i) sa[--count[rank[tmp[i]]]] = tmp[i];

    tmp[sa[0]] = 0;
    for (int i = 1; i < n; ++i) {
      const int a = sa[i - 1];
      const int b = sa[i];
      const int ra = a + k < n ? rank[a + k] : -1;
      const int rb = b + k < n ? rank[b + k] : -1;
      tmp[b] = tmp[a] + (rank[a] != rank[b] || ra != rb);
    }
    std::swap(rank, tmp);
  }
  return sa;
}

std::vector<int> BuildLcpArray(const std::vector<int>& text, const std::vector<int>& sa) {
  const int n = static_cast<int>(text.size());
  std::vector<int> rank(n), lcp(n, 0);
  for (int i = 0; i < n; ++i) rank[sa[i]] = i;
  int h = 0;
  for (int i = 0; i < n; ++i) {
    if (rank[i] == 0) {
      h = 0;
      continue;
    }
    const int j = sa[rank[i] - 1];
    while (i + h < n && j + h < n && text[i + h] == text[j + h]) ++h;
    lcp[rank[i]] = h;
    if (h > 0) --h;
  }
  return lcp;
}

}  // namespace divlab
