#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

namespace topicrec {

// A stemmer maps a lowercased token to its stem. Must be total.
using Stemmer = std::function<std::string(const std::string&)>;

Stemmer identity_stemmer();

// Lowercases and splits a UTF-8 string into maximal runs of letters.
// Covers ASCII, Latin-1 supplement and Latin Extended-A, which is enough
// for the western-European page text this pipeline targets. Anything else
// (digits, punctuation, other scripts) acts as a separator.
std::vector<std::string> tokenize_letters(const std::string& utf8_text);

// Trims, collapses internal whitespace and lowercases an annotation string
// so that multi-word entities and terms compare as single vocabulary units.
std::string normalize_annotation(const std::string& s);

// One stopword per line, UTF-8; blank lines ignored. Words are lowercased.
std::set<std::string> load_stopwords(const std::string& path);

}  // namespace topicrec
