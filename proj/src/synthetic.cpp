#include "volta/synthetic.hpp"

#include <sstream>

#include "volta/rng.hpp"

namespace volta {

void SyntheticSpec::validate() const {
    if (task != "lm" && task != "dialog" && task != "qag") {
        throw SpecError("SyntheticSpec: unknown task '" + task + "'");
    }
    if (n_contexts <= 0) throw SpecError("SyntheticSpec: n_contexts must be positive");
    if (task == "qag") {
        if (spans_per_context <= 0) throw SpecError("SyntheticSpec: spans_per_context must be positive");
        if (span_len < 1) throw SpecError("SyntheticSpec: span_len must be at least 1");
        if (span_len > 3) throw SpecError("SyntheticSpec: span_len above 3 exceeds the context template");
        if (n_entities <= 0 || values_per_field <= 0) {
            throw SpecError("SyntheticSpec: entity/value pools must be positive");
        }
    }
}

std::vector<std::string> SyntheticCorpus::all_texts() const {
    std::vector<std::string> out;
    out.reserve(examples.size() * 2);
    auto join = [](const std::vector<std::string>& words) {
        std::ostringstream os;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) os << ' ';
            os << words[i];
        }
        return os.str();
    };
    for (const RawExample& ex : examples) {
        if (!ex.context.empty()) out.push_back(join(ex.context));
        out.push_back(join(ex.target));
    }
    return out;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticCorpus corpus;
    corpus.spec = spec;
    RandomStream rng(mix_seed(spec.seed, 0x5e3dc0));

    if (spec.task == "qag") {
        // record-style contexts: an entity followed by field/value pairs; each
        // value is an answer span and each field has a templated question
        const int S = spec.spans_per_context;
        for (int c = 0; c < spec.n_contexts; ++c) {
            const std::string entity = "ent" + std::to_string(rng.uniform_int(spec.n_entities));
            std::vector<std::string> ctx{entity};
            std::vector<int> value_pos(static_cast<std::size_t>(S));
            for (int j = 0; j < S; ++j) {
                ctx.push_back("f" + std::to_string(j));
                value_pos[static_cast<std::size_t>(j)] = static_cast<int>(ctx.size()) + 1; // 1-based
                const int v = rng.uniform_int(spec.values_per_field);
                for (int w = 0; w < spec.span_len; ++w) {
                    ctx.push_back("v" + std::to_string(j) + "w" + std::to_string(v) +
                                  (spec.span_len > 1 ? "p" + std::to_string(w) : ""));
                }
            }
            for (int j = 0; j < S; ++j) {
                RawExample ex;
                ex.context_id = c;
                ex.context = ctx;
                ex.target = {"what", "f" + std::to_string(j), "has", entity};
                ex.span_s = value_pos[static_cast<std::size_t>(j)];
                ex.span_e = ex.span_s + spec.span_len - 1;
                if (ex.span_e > static_cast<int>(ctx.size())) {
                    throw SpecError("make_synthetic_corpus: span exceeds context");
                }
                corpus.examples.push_back(std::move(ex));
            }
        }
        return corpus;
    }

    if (spec.task == "lm") {
        // small subject-verb-object grammar with optional adverb
        const std::vector<std::string> subjects{"alice", "bob",  "cara", "dan",
                                                "erin",  "finn", "gwen", "hugo"};
        const std::vector<std::string> verbs{"sees", "likes", "paints", "builds", "finds", "moves"};
        const std::vector<std::string> objects{"stones", "rivers", "houses", "tools",
                                               "boats",  "lamps",  "maps",   "doors"};
        const std::vector<std::string> adverbs{"slowly", "quickly", "quietly", "badly"};
        for (int i = 0; i < spec.n_contexts; ++i) {
            RawExample ex;
            ex.context_id = i;
            ex.target = {"the", subjects[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(subjects.size())))],
                         verbs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(verbs.size())))],
                         objects[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(objects.size())))]};
            if (rng.uniform() < 0.5) {
                ex.target.push_back(adverbs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(adverbs.size())))]);
            }
            corpus.examples.push_back(std::move(ex));
        }
        return corpus;
    }

    // dialog: a handful of intents, each with prompt and response pools; one
    // dialog may stack one or two history turns
    struct Intent {
        std::vector<std::vector<std::string>> prompts;
        std::vector<std::vector<std::string>> responses;
    };
    const std::vector<Intent> intents{
        {{{"hello", "there"}, {"hi", "friend"}},
         {{"hello", "to", "you"}, {"hi", "nice", "to", "meet", "you"}, {"hey", "hello"}}},
        {{{"how", "are", "you"}, {"are", "you", "well"}},
         {{"i", "am", "fine"}, {"doing", "well", "thanks"}, {"quite", "well"}}},
        {{{"what", "time", "is", "it"}, {"tell", "me", "the", "time"}},
         {{"it", "is", "noon"}, {"almost", "midnight"}, {"time", "to", "go"}}},
        {{{"where", "is", "the", "station"}, {"find", "the", "station"}},
         {{"near", "the", "square"}, {"two", "blocks", "north"}, {"behind", "the", "market"}}},
        {{{"goodbye", "now"}, {"see", "you", "soon"}},
         {{"goodbye", "friend"}, {"see", "you", "tomorrow"}, {"farewell"}}},
    };
    for (int i = 0; i < spec.n_contexts; ++i) {
        const Intent& intent = intents[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(intents.size())))];
        RawExample ex;
        ex.context_id = i;
        if (rng.uniform() < 0.3) {
            const Intent& opener = intents[0];
            const auto& first = opener.prompts[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(opener.prompts.size())))];
            ex.context.insert(ex.context.end(), first.begin(), first.end());
            ex.context.push_back("<sep>");
        }
        const auto& prompt = intent.prompts[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(intent.prompts.size())))];
        ex.context.insert(ex.context.end(), prompt.begin(), prompt.end());
        ex.target = intent.responses[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(intent.responses.size())))];
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

} // namespace volta
