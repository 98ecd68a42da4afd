#include "icrs/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "icrs/rng.hpp"

namespace icrs::text {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}

char lower_ascii(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (is_word_byte(static_cast<unsigned char>(ch))) {
            cur.push_back(lower_ascii(ch));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> content_words(std::string_view s,
                                       const std::set<std::string>& stopwords) {
    std::vector<std::string> out;
    for (auto& tok : tokenize(s)) {
        if (!stopwords.count(tok)) out.push_back(std::move(tok));
    }
    return out;
}

const std::set<std::string>& default_stopwords() {
    static const std::set<std::string> words = {
        "a",    "an",    "and",   "are",  "as",    "at",   "be",   "been",
        "but",  "by",    "can",   "could", "did",  "do",   "does", "for",
        "from", "had",   "has",   "have", "he",    "her",  "him",  "his",
        "how",  "i",     "if",    "in",   "is",    "it",   "its",  "just",
        "like", "me",    "my",    "no",   "not",   "of",   "on",   "or",
        "our",  "she",   "so",    "some", "something", "that", "the", "their",
        "them", "then",  "there", "they", "this",  "to",   "up",   "us",
        "was",  "we",    "were",  "what", "when",  "which", "who", "will",
        "with", "would", "you",   "your",
    };
    return words;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](char c) { return lower_ascii(c); });
    return out;
}

std::string capitalize_ascii(std::string_view s) {
    std::string out(s);
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z')
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

namespace {

// Finds the next whole-phrase, case-insensitive occurrence of `phrase` in
// `hay` at or after `from`; npos if none. A match is rejected when it abuts
// an alphanumeric byte on either side.
std::size_t find_phrase(std::string_view hay, std::string_view phrase,
                        std::size_t from) {
    if (phrase.empty() || hay.size() < phrase.size()) return std::string::npos;
    for (std::size_t i = from; i + phrase.size() <= hay.size(); ++i) {
        bool hit = true;
        for (std::size_t j = 0; j < phrase.size(); ++j) {
            if (lower_ascii(hay[i + j]) != lower_ascii(phrase[j])) {
                hit = false;
                break;
            }
        }
        if (!hit) continue;
        if (i > 0 && is_word_byte(static_cast<unsigned char>(hay[i - 1])))
            continue;
        std::size_t end = i + phrase.size();
        if (end < hay.size() && is_word_byte(static_cast<unsigned char>(hay[end])))
            continue;
        return i;
    }
    return std::string::npos;
}

}  // namespace

std::string mask_phrase(std::string_view s, std::string_view phrase,
                        std::string_view mask) {
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t hit = find_phrase(s, phrase, pos);
        if (hit == std::string::npos) {
            out.append(s.substr(pos));
            break;
        }
        out.append(s.substr(pos, hit - pos));
        out.append(mask);
        pos = hit + phrase.size();
    }
    return out;
}

bool contains_phrase(std::string_view s, std::string_view phrase) {
    return find_phrase(s, phrase, 0) != std::string::npos;
}

std::string text_hash(std::string_view s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

}  // namespace icrs::text
