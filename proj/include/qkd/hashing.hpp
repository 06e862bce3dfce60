#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkd/rng.hpp"

namespace qkd {

// Packed bit string, LSB-first within 64-bit words.
class BitVec {
public:
    BitVec() = default;
    explicit BitVec(std::size_t nbits) : n_(nbits), w_((nbits + 63) / 64) {}

    static BitVec random(std::size_t nbits, CounterRng& rng) {
        BitVec b(nbits);
        for (auto& w : b.w_) w = rng.next();
        b.mask_tail();
        return b;
    }

    std::size_t size() const { return n_; }

    bool get(std::size_t i) const { return (w_[i >> 6] >> (i & 63)) & 1; }
    void set(std::size_t i, bool v) {
        std::uint64_t m = 1ULL << (i & 63);
        if (v)
            w_[i >> 6] |= m;
        else
            w_[i >> 6] &= ~m;
    }

    BitVec& operator^=(const BitVec& o) {
        if (n_ != o.n_) throw std::invalid_argument("BitVec: length mismatch");
        for (std::size_t k = 0; k < w_.size(); ++k) w_[k] ^= o.w_[k];
        return *this;
    }
    friend BitVec operator^(BitVec a, const BitVec& b) { return a ^= b; }

    bool operator==(const BitVec& o) const { return n_ == o.n_ && w_ == o.w_; }

    bool any() const {
        for (auto w : w_)
            if (w) return true;
        return false;
    }

    // bits [from, from+len) as a new vector
    BitVec slice(std::size_t from, std::size_t len) const {
        BitVec out(len);
        for (std::size_t i = 0; i < len; ++i) out.set(i, get(from + i));
        return out;
    }

    const std::uint64_t* words() const { return w_.data(); }
    std::size_t word_count() const { return w_.size(); }

    std::uint64_t low_bits() const { return w_.empty() ? 0 : w_[0]; }

private:
    void mask_tail() {
        if (n_ % 64) w_.back() &= (~0ULL) >> (64 - n_ % 64);
    }

    std::size_t n_ = 0;
    std::vector<std::uint64_t> w_;
};

namespace detail {

// parity of AND between `pattern` and the window of `bits` starting at `offset`
inline bool window_parity(const BitVec& bits, std::size_t offset, const BitVec& pattern) {
    std::size_t m = pattern.size();
    std::uint64_t acc = 0;
    std::size_t word = offset >> 6;
    unsigned shift = offset & 63;
    for (std::size_t k = 0; k < pattern.word_count(); ++k) {
        std::uint64_t chunk = bits.words()[word + k] >> shift;
        if (shift && word + k + 1 < bits.word_count()) chunk |= bits.words()[word + k + 1] << (64 - shift);
        if (k + 1 == pattern.word_count() && (m % 64)) chunk &= (~0ULL) >> (64 - m % 64);
        acc ^= chunk & pattern.words()[k];
    }
    return std::popcount(acc) & 1;
}

}  // namespace detail

// Toeplitz-matrix-times-vector over GF(2).  The l x m matrix is defined by
// its l+m-1 diagonals drawn from descriptor_seed: T[i][j] = seed[i - j + m - 1].
inline BitVec toeplitz_hash(const BitVec& input, const BitVec& descriptor_seed, std::size_t out_len) {
    if (out_len < 1) throw std::invalid_argument("toeplitz_hash: out_len must be >= 1");
    std::size_t m = input.size();
    std::size_t need = out_len + (m == 0 ? 1 : m) - 1;
    if (descriptor_seed.size() < need) throw std::invalid_argument("toeplitz_hash: seed too short for Toeplitz diagonals");

    // y_i = parity(seed[i .. i+m-1] AND reverse(input)); reversing once turns
    // every row into a contiguous window of the diagonal string
    BitVec rev(m);
    for (std::size_t j = 0; j < m; ++j) rev.set(j, input.get(m - 1 - j));

    BitVec out(out_len);
    for (std::size_t i = 0; i < out_len; ++i)
        if (m > 0 && detail::window_parity(descriptor_seed, i, rev)) out.set(i, true);
    return out;
}

// Leftover-hash extraction with seed length equal to input length: a Toeplitz
// block on the first m-l bits XORed with the last l bits (the [T | 1] family,
// two-universal, needs m-1 seed bits).
inline BitVec toeplitz_extract(const BitVec& raw, const BitVec& seed, std::size_t out_len) {
    std::size_t m = raw.size();
    if (seed.size() != m) throw std::invalid_argument("toeplitz_extract: seed length must equal input length");
    if (out_len > m) throw std::invalid_argument("toeplitz_extract: output longer than input");
    if (out_len == 0) return BitVec(0);

    std::size_t head = m - out_len;
    BitVec tail = raw.slice(head, out_len);
    if (head == 0) return tail;
    BitVec block = toeplitz_hash(raw.slice(0, head), seed, out_len);
    return block ^ tail;
}

}  // namespace qkd
