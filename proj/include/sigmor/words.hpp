#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sigmor {

/// A word over the alphabet {1, ..., d}. The empty word is the unit of the
/// tensor algebra and indexes the constant coordinate.
struct Word {
    std::vector<int> letters;

    Word() = default;
    explicit Word(std::vector<int> ls) : letters(std::move(ls)) {}
    Word(std::initializer_list<int> ls) : letters(ls) {}

    int length() const { return static_cast<int>(letters.size()); }
    bool empty() const { return letters.empty(); }

    Word concat(const Word& other) const {
        Word r(*this);
        r.letters.insert(r.letters.end(), other.letters.begin(), other.letters.end());
        return r;
    }

    // Length-first lexicographic order, matching the basis enumeration.
    bool operator<(const Word& o) const {
        if (letters.size() != o.letters.size()) return letters.size() < o.letters.size();
        return letters < o.letters;
    }
    bool operator==(const Word& o) const { return letters == o.letters; }
};

/// Text form: digit string for alphabets up to 9 letters ("121"), comma
/// separated above that ("1,12,3"). The empty word prints as "e".
inline std::string format_word(const Word& w, int d) {
    if (w.empty()) return "e";
    std::ostringstream os;
    bool commas = d > 9;
    for (std::size_t i = 0; i < w.letters.size(); ++i) {
        if (commas && i) os << ',';
        os << w.letters[i];
    }
    return os.str();
}

inline Word parse_word(const std::string& text, int d) {
    if (text == "e") return Word{};
    Word w;
    if (d > 9) {
        std::istringstream is(text);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (tok.empty()) throw std::invalid_argument("empty letter in word '" + text + "'");
            w.letters.push_back(std::stoi(tok));
        }
    } else {
        for (char c : text) {
            if (c < '1' || c > '9') throw std::invalid_argument("bad letter in word '" + text + "'");
            w.letters.push_back(c - '0');
        }
    }
    for (int l : w.letters)
        if (l < 1 || l > d) throw std::invalid_argument("letter out of range in word '" + text + "'");
    return w;
}

/// dim T^m(R^d) = 1 + d + ... + d^m. Throws on int64 overflow so callers see
/// "dimension too large" instead of a wrapped value.
inline std::int64_t dim_truncated(int d, int m) {
    if (d < 1 || m < 0) throw std::invalid_argument("dim_truncated: need d >= 1, m >= 0");
    std::int64_t n = 1;
    for (int k = 0; k < m; ++k) {
        if (n > (std::numeric_limits<std::int64_t>::max() - 1) / d)
            throw std::overflow_error("dim_truncated: dimension too large");
        n = n * d + 1;
    }
    return n;
}

/// Bijection between words of length <= m over {1..d} and indices
/// 0..dim_truncated(d,m)-1, in length-first lexicographic order. Index 0 is
/// the empty word, indices 1..d are the letters, and so on.
class BasisOrder {
public:
    BasisOrder(int d, int m) : d_(d), m_(m) {
        if (d < 1) throw std::invalid_argument("BasisOrder: d must be >= 1");
        if (m < 0) throw std::invalid_argument("BasisOrder: m must be >= 0");
        dim_ = dim_truncated(d, m);
        offsets_.resize(m + 2);
        pow_.resize(m + 1);
        std::int64_t p = 1, off = 0;
        for (int k = 0; k <= m; ++k) {
            offsets_[k] = off;
            pow_[k] = p;
            off += p;
            if (k < m) p *= d;
        }
        offsets_[m + 1] = off;
    }

    int alphabet() const { return d_; }
    int level() const { return m_; }
    std::int64_t dim() const { return dim_; }

    /// First index of words of length k.
    std::int64_t level_offset(int k) const { return offsets_.at(k); }
    /// d^k, for k <= m.
    std::int64_t level_size(int k) const { return pow_.at(k); }

    std::int64_t word_to_index(const Word& w) const {
        int L = w.length();
        if (L > m_) throw std::out_of_range("word_to_index: word longer than truncation level");
        std::int64_t r = 0;
        for (int l : w.letters) {
            if (l < 1 || l > d_) throw std::out_of_range("word_to_index: letter out of range");
            r = r * d_ + (l - 1);
        }
        return offsets_[L] + r;
    }

    Word index_to_word(std::int64_t idx) const {
        if (idx < 0 || idx >= dim_) throw std::out_of_range("index_to_word: index out of range");
        int L = m_;
        while (offsets_[L] > idx) --L;
        std::int64_t r = idx - offsets_[L];
        Word w;
        w.letters.resize(L);
        for (int i = L - 1; i >= 0; --i) {
            w.letters[i] = static_cast<int>(r % d_) + 1;
            r /= d_;
        }
        return w;
    }

    /// Index of w.i given the index of w, without materialising the word.
    /// Valid when index(w) addresses a word of length < m.
    std::int64_t append_letter(std::int64_t idx, int letter, int word_length) const {
        return offsets_[word_length + 1] + (idx - offsets_[word_length]) * d_ + (letter - 1);
    }

private:
    int d_, m_;
    std::int64_t dim_;
    std::vector<std::int64_t> offsets_;
    std::vector<std::int64_t> pow_;
};

/// Finite linear combination of words with real coefficients. Terms with
/// coefficient exactly zero are dropped on insertion.
class LinearFunctional {
public:
    using Terms = std::map<Word, double>;

    LinearFunctional() = default;

    void add(const Word& w, double c) {
        if (c == 0.0) return;
        auto [it, fresh] = terms_.try_emplace(w, c);
        if (!fresh) {
            it->second += c;
            if (it->second == 0.0) terms_.erase(it);
        }
    }

    const Terms& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }

    /// Highest word length present; -1 for the zero functional.
    int degree() const {
        int deg = -1;
        for (const auto& [w, c] : terms_) deg = std::max(deg, w.length());
        return deg;
    }

    LinearFunctional& operator*=(double s) {
        if (s == 0.0) { terms_.clear(); return *this; }
        for (auto& [w, c] : terms_) c *= s;
        return *this;
    }
    LinearFunctional& operator+=(const LinearFunctional& o) {
        for (const auto& [w, c] : o.terms_) add(w, c);
        return *this;
    }

private:
    Terms terms_;
};

namespace detail {

inline void shuffle_rec(std::vector<int>& prefix, const std::vector<int>& a, std::size_t ia,
                        const std::vector<int>& b, std::size_t ib,
                        std::map<Word, long long>& out) {
    if (ia == a.size() && ib == b.size()) {
        out[Word(prefix)] += 1;
        return;
    }
    if (ia < a.size()) {
        prefix.push_back(a[ia]);
        shuffle_rec(prefix, a, ia + 1, b, ib, out);
        prefix.pop_back();
    }
    if (ib < b.size()) {
        prefix.push_back(b[ib]);
        shuffle_rec(prefix, a, ia, b, ib + 1, out);
        prefix.pop_back();
    }
}

} // namespace detail

/// Shuffle product of two words: the sum over all interleavings, with integer
/// multiplicities. The result has (|a|+|b| choose |a|) interleavings in total.
inline LinearFunctional shuffle(const Word& a, const Word& b) {
    std::map<Word, long long> acc;
    std::vector<int> prefix;
    prefix.reserve(a.letters.size() + b.letters.size());
    detail::shuffle_rec(prefix, a.letters, 0, b.letters, 0, acc);
    LinearFunctional r;
    for (const auto& [w, c] : acc) r.add(w, static_cast<double>(c));
    return r;
}

} // namespace sigmor
