#include "nqs/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "nqs/error.hpp"
#include "nqs/text.hpp"

namespace nqs {

namespace {

std::string indexed_text(const DocumentRef& d) { return d.title + "\n" + d.content; }

void check_document(const DocumentRef& d) {
    if (d.doc_id.empty()) throw Error(ErrorCode::InvalidDocument, "empty doc_id");
    if (d.content.empty()) throw Error(ErrorCode::InvalidDocument, "document " + d.doc_id + " has no content");
}

}  // namespace

CorpusIndex CorpusIndex::build(std::vector<DocumentRef> docs) {
    CorpusIndex index;
    std::size_t total_length = 0;
    for (auto& doc : docs) {
        check_document(doc);
        if (index.documents_.count(doc.doc_id) != 0) throw Error(ErrorCode::DuplicateDocId, doc.doc_id);
        std::map<std::string, int> tf;
        const auto tokens = text::tokenize(indexed_text(doc));
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) index.postings_[term].push_back({doc.doc_id, count});
        index.doc_lengths_[doc.doc_id] = tokens.size();
        total_length += tokens.size();
        const auto id = doc.doc_id;
        index.documents_.emplace(id, std::move(doc));
    }
    for (auto& [term, list] : index.postings_) {
        std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    }
    if (!index.documents_.empty()) {
        // Guard against a corpus whose documents are all stopwords.
        index.avg_doc_length_ =
            std::max(1.0, static_cast<double>(total_length) / static_cast<double>(index.documents_.size()));
    }
    return index;
}

std::size_t CorpusIndex::doc_length(const std::string& doc_id) const {
    const auto it = doc_lengths_.find(doc_id);
    return it == doc_lengths_.end() ? 0 : it->second;
}

std::optional<DocumentRef> CorpusIndex::find(const std::string& doc_id) const {
    const auto it = documents_.find(doc_id);
    if (it == documents_.end()) return std::nullopt;
    return it->second;
}

std::vector<RetrievalHit> retrieve(const CorpusIndex& index, std::string_view query, std::size_t k,
                                   Bm25Params params) {
    if (k == 0 || index.empty()) return {};
    const auto terms = text::token_set(query);
    const auto n_docs = static_cast<double>(index.size());
    std::unordered_map<std::string, double> scores;
    for (const auto& term : terms) {
        const auto it = index.postings().find(term);
        if (it == index.postings().end()) continue;
        const auto df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& p : it->second) {
            const auto tf = static_cast<double>(p.term_frequency);
            const auto len_norm = 1.0 - params.b + params.b * static_cast<double>(index.doc_length(p.doc_id)) /
                                                       index.avg_doc_length();
            scores[p.doc_id] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * len_norm);
        }
    }
    std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > k) ranked.resize(k);
    std::vector<RetrievalHit> hits;
    hits.reserve(ranked.size());
    int rank = 1;
    for (const auto& [id, score] : ranked) {
        hits.push_back({*index.find(id), score, rank++});
    }
    return hits;
}

LexicalRetriever::LexicalRetriever(CorpusIndex index, Bm25Params params)
    : index_(std::make_shared<const CorpusIndex>(std::move(index))), params_(params) {}

std::vector<RetrievalHit> LexicalRetriever::retrieve(std::string_view query, std::size_t k) const {
    return nqs::retrieve(*snapshot(), query, k, params_);
}

std::optional<DocumentRef> LexicalRetriever::find(const std::string& doc_id) const {
    return snapshot()->find(doc_id);
}

void LexicalRetriever::swap_index(CorpusIndex index) {
    auto next = std::make_shared<const CorpusIndex>(std::move(index));
    std::lock_guard lock(mutex_);
    index_ = std::move(next);
}

std::shared_ptr<const CorpusIndex> LexicalRetriever::snapshot() const {
    std::lock_guard lock(mutex_);
    return index_;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string title_of(const std::string& content, const std::string& fallback) {
    for (const auto& line : text::split_lines(content)) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        const auto hashes = t.find_first_not_of('#');
        if (hashes != std::string::npos && hashes > 0) t = text::trim(t.substr(hashes));
        return t.empty() ? fallback : t;
    }
    return fallback;
}

std::vector<DocumentRef> parse_jsonl_docs(const std::filesystem::path& path) {
    std::vector<DocumentRef> docs;
    std::size_t line_no = 0;
    for (const auto& line : AppendLog::read_lines(path)) {
        ++line_no;
        try {
            docs.push_back(nlohmann::json::parse(line).get<DocumentRef>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidDocument,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        check_document(docs.back());
    }
    return docs;
}

}  // namespace

std::vector<DocumentRef> load_corpus(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw Error(ErrorCode::Io, "corpus path not found: " + path.string());
    if (!fs::is_directory(path)) return parse_jsonl_docs(path);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = text::to_lower(entry.path().extension().string());
        if (ext == ".txt" || ext == ".md" || ext == ".markdown") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<DocumentRef> docs;
    for (const auto& file : files) {
        DocumentRef d;
        d.doc_id = file.stem().string();
        d.content = read_file(file);
        d.title = title_of(d.content, d.doc_id);
        d.source_uri = file.string();
        if (text::trim(d.content).empty()) continue;
        docs.push_back(std::move(d));
    }
    return docs;
}

CorpusStore::CorpusStore(std::filesystem::path file) : file_(std::move(file)) {
    if (!file_.empty() && std::filesystem::exists(file_)) {
        for (auto& d : parse_jsonl_docs(file_)) {
            const auto id = d.doc_id;
            docs_.insert_or_assign(id, std::move(d));
        }
    }
}

std::vector<DocumentRef> CorpusStore::documents() const {
    std::lock_guard lock(mutex_);
    std::vector<DocumentRef> out;
    out.reserve(docs_.size());
    for (const auto& [id, d] : docs_) out.push_back(d);
    return out;
}

std::size_t CorpusStore::upsert(const std::vector<DocumentRef>& docs) {
    for (const auto& d : docs) check_document(d);
    std::lock_guard lock(mutex_);
    std::size_t changed = 0;
    for (const auto& d : docs) {
        auto [it, inserted] = docs_.try_emplace(d.doc_id, d);
        if (inserted || !(it->second == d)) {
            it->second = d;
            ++changed;
        }
    }
    if (file_.empty()) return changed;
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    const auto tmp = file_.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
        for (const auto& [id, d] : docs_) out << nlohmann::json(d).dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, file_);
    return changed;
}

}  // namespace nqs
