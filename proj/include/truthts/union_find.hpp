#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace truthts {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

    bool connected(std::size_t a, std::size_t b) { return find(a) == find(b); }

    /// Dense labels 0..C-1 in order of first appearance.
    std::vector<std::size_t> labels() {
        std::vector<std::size_t> out(parent_.size());
        std::vector<std::size_t> remap(parent_.size(), parent_.size());
        std::size_t next = 0;
        for (std::size_t i = 0; i < parent_.size(); ++i) {
            const std::size_t r = find(i);
            if (remap[r] == parent_.size()) remap[r] = next++;
            out[i] = remap[r];
        }
        return out;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> rank_;
};

}  // namespace truthts
