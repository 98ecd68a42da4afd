#pragma once
// Tokenization, stop-words, and item-name masking.

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace icrs::text {

// Word tokenizer used by BM25 and the mock clients: splits on anything that
// is not an ASCII alphanumeric or a non-ASCII byte (so UTF-8 words survive
// intact), lower-cases ASCII letters. Punctuation is dropped; stop-words are
// retained -- filtering, where wanted, happens at the call site.
std::vector<std::string> tokenize(std::string_view s);

// Tokens of `s` minus `stopwords` ("content words" for the mock judges).
std::vector<std::string> content_words(std::string_view s,
                                       const std::set<std::string>& stopwords);

// The fixed stop-word list shipped with the repo.
const std::set<std::string>& default_stopwords();

// Case-insensitive whole-phrase replacement: every occurrence of `phrase`
// in `s` that is not embedded inside a longer alphanumeric word is replaced
// by `mask`. Matching is ASCII-case-insensitive.
std::string mask_phrase(std::string_view s, std::string_view phrase,
                        std::string_view mask);

// True if `phrase` occurs in `s` as a whole phrase, ASCII-case-insensitive.
bool contains_phrase(std::string_view s, std::string_view phrase);

std::string to_lower_ascii(std::string_view s);

// First ASCII letter upper-cased, remainder verbatim ("material" -> "Material").
std::string capitalize_ascii(std::string_view s);

// "fnv1a64:<16 hex digits>" over the UTF-8 bytes; keys embedding sidecars
// and run-log prompt hashes.
std::string text_hash(std::string_view s);

}  // namespace icrs::text
