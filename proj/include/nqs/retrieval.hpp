#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nqs/core_model.hpp"

namespace nqs {

struct Posting {
    std::string doc_id;
    int term_frequency = 0;
};

// Immutable inverted index over title + content.
class CorpusIndex {
public:
    CorpusIndex() = default;

    // Throws DuplicateDocId when two documents share an id and
    // InvalidDocument for an empty id or empty content.
    static CorpusIndex build(std::vector<DocumentRef> docs);

    const std::map<std::string, DocumentRef>& documents() const noexcept { return documents_; }
    const std::map<std::string, std::vector<Posting>>& postings() const noexcept { return postings_; }
    std::size_t doc_length(const std::string& doc_id) const;
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    std::size_t size() const noexcept { return documents_.size(); }
    bool empty() const noexcept { return documents_.empty(); }

    std::optional<DocumentRef> find(const std::string& doc_id) const;

private:
    std::map<std::string, DocumentRef> documents_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, std::size_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

struct RetrievalHit {
    DocumentRef doc;
    double score = 0.0;
    int rank = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

inline constexpr std::size_t kDefaultRetrievalK = 4;

// Okapi BM25 top-k. Only documents sharing at least one query term are
// returned; ties go to the lexicographically smaller doc_id.
std::vector<RetrievalHit> retrieve(const CorpusIndex& index, std::string_view query, std::size_t k,
                                   Bm25Params params = {});

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<RetrievalHit> retrieve(std::string_view query, std::size_t k) const = 0;
    virtual std::optional<DocumentRef> find(const std::string& doc_id) const = 0;
};

// Lexical retriever whose index can be swapped while queries are running.
class LexicalRetriever final : public Retriever {
public:
    explicit LexicalRetriever(CorpusIndex index = {}, Bm25Params params = {});

    std::vector<RetrievalHit> retrieve(std::string_view query, std::size_t k) const override;
    std::optional<DocumentRef> find(const std::string& doc_id) const override;

    void swap_index(CorpusIndex index);
    std::shared_ptr<const CorpusIndex> snapshot() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const CorpusIndex> index_;
    Bm25Params params_;
};

// Directory of .txt/.md files (stem = doc_id, first heading or line = title)
// or a JSON Lines file of {doc_id, title, content}.
std::vector<DocumentRef> load_corpus(const std::filesystem::path& path);

// Persistent corpus file (JSON Lines); an empty path keeps it in memory.
// Adding a doc with an existing id replaces it.
class CorpusStore {
public:
    explicit CorpusStore(std::filesystem::path file = {});

    std::vector<DocumentRef> documents() const;
    // Returns the number of new or replaced documents.
    std::size_t upsert(const std::vector<DocumentRef>& docs);

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::map<std::string, DocumentRef> docs_;
};

}  // namespace nqs
