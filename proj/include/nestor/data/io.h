#ifndef NESTOR_DATA_IO_H_
#define NESTOR_DATA_IO_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "nestor/data/example.h"

namespace nestor::data {

// One JSON object per line:
//   {"id": str, "tokens": [str], "pos": [str]?, "entities": [{"start", "end", "type"}]?}
// Throws DataError with the line number for malformed lines and with the
// sentence id for invalid entities.
std::vector<SentenceExample> load_jsonl(const std::string& path);
std::vector<SentenceExample> parse_jsonl(std::istream& in, const std::string& source);
void save_jsonl(const std::string& path, const std::vector<SentenceExample>& examples);

nlohmann::json example_to_json(const SentenceExample& ex);
// `where` prefixes error messages.
SentenceExample example_from_json(const nlohmann::json& j, const std::string& where);

// Checks span bounds, start <= end, non-empty types, unique triples and
// POS length.
void validate_example(const SentenceExample& ex);

struct BioStats {
  // I-X tags that did not continue an X run and were read as B-X.
  int orphan_inside = 0;
};

// B-X (I-X)* runs become spans.
std::vector<EntitySpan> bio_to_spans(const std::vector<std::string>& tags, BioStats* stats = nullptr);
// Throws DataError when spans overlap.
std::vector<std::string> spans_to_bio(const std::vector<EntitySpan>& spans, int length);

// Blank-line separated sentences of whitespace separated columns. The
// first column is the token and the last the BIO tag; with three or more
// columns the second is read as the POS tag. "-DOCSTART-" lines are
// skipped. Sentence ids are "<file stem>-<index>".
std::vector<SentenceExample> load_conll(const std::string& path, BioStats* stats = nullptr);
// Writes "token tag" or "token pos tag" lines. Throws DataError for
// overlapping entities.
void save_conll(const std::string& path, const std::vector<SentenceExample>& examples);

// Dispatches on "jsonl" / "conll".
std::vector<SentenceExample> load_dataset(const std::string& path, const std::string& format);

}  // namespace nestor::data

#endif  // NESTOR_DATA_IO_H_
