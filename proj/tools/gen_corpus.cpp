// Generates data/corpus.txt: ~200 KB of deterministic synthetic prose. The
// text walks through themed sections so that contiguous client shards end up
// with genuinely different token statistics (non-IID by position).
//
//   gen_corpus <output-path> [seed] [target-bytes]

#include "rng.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

const std::vector<std::string> kFunctionWords = {
    "the", "a", "of", "and", "to", "in", "was", "with", "on", "for",
    "as", "at", "by", "from", "into", "over", "under", "near", "through", "while",
};

const std::vector<std::string> kVerbs = {
    "carried", "turned", "held", "crossed", "followed", "kept", "reached", "moved",
    "gathered", "waited", "rested", "rose", "fell", "stayed", "passed", "settled",
};

const std::vector<std::vector<std::string>> kTopics = {
    {"harbor", "tide", "gull", "mast", "rope", "salt", "pier", "sail", "wave", "anchor",
     "deck", "fog", "buoy", "net", "shore", "wind", "hull", "cargo", "lantern", "dock"},
    {"orchard", "apple", "branch", "ladder", "basket", "blossom", "bee", "fence", "root", "crate",
     "harvest", "leaf", "grass", "shade", "cider", "barrel", "trunk", "row", "soil", "press"},
    {"trail", "ridge", "stone", "summit", "pine", "valley", "creek", "moss", "cliff", "path",
     "cairn", "slope", "meadow", "thunder", "snow", "boot", "pack", "camp", "ember", "peak"},
    {"bench", "chisel", "plank", "hammer", "vise", "sawdust", "joint", "hinge", "blade", "grain",
     "lathe", "peg", "glue", "clamp", "drawer", "panel", "frame", "rasp", "oil", "shaving"},
    {"shelf", "volume", "margin", "index", "binding", "reader", "page", "lamp", "ledger", "quill",
     "archive", "folio", "ink", "catalog", "scroll", "desk", "spine", "chapter", "note", "stack"},
    {"market", "stall", "coin", "scale", "ribbon", "spice", "trader", "cart", "awning", "crowd",
     "bargain", "cloth", "jar", "loaf", "copper", "bell", "wagon", "ledger", "price", "sack"},
    {"river", "mill", "wheel", "current", "reed", "ford", "stone", "flour", "sluice", "bank",
     "eddy", "dam", "channel", "grist", "otter", "ripple", "bridge", "weir", "pond"},
    {"garden", "seed", "trellis", "vine", "petal", "spade", "row", "clay", "stem", "bud",
     "dew", "hedge", "moss", "gravel", "fern", "pot", "bloom", "thorn", "mulch", "sprout"},
    {"engine", "rail", "signal", "coal", "piston", "track", "whistle", "boiler", "switch", "yard",
     "smoke", "coupling", "gauge", "timetable", "platform", "tender", "valve", "spark", "brake", "siding"},
    {"star", "lens", "chart", "orbit", "meridian", "dome", "mirror", "comet", "axis", "dial",
     "eclipse", "sky", "plate", "drift", "meter", "night", "focus", "sphere", "arc", "glow"},
};

} // namespace

int main(int argc, char ** argv) {
    if (argc < 2) {
        std::cerr << "usage: gen_corpus <output-path> [seed] [target-bytes]\n";
        return 1;
    }
    const std::string path = argv[1];
    const uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 20240915ull;
    const size_t target = argc > 3 ? std::stoull(argv[3]) : 200 * 1024;

    fedsim::Rng rng(seed);
    std::string text;
    text.reserve(target + 256);

    const size_t section_bytes = target / kTopics.size();
    for (const std::vector<std::string> & topic : kTopics) {
        const size_t section_end = text.size() + section_bytes;
        size_t words_in_sentence = 0;
        size_t sentence_target = 6 + rng.below(8);
        while (text.size() < section_end) {
            const uint64_t pick = rng.below(10);
            const std::string * word;
            if (pick < 4) {
                word = &topic[rng.below(topic.size())];
            } else if (pick < 7) {
                word = &kFunctionWords[rng.below(kFunctionWords.size())];
            } else {
                word = &kVerbs[rng.below(kVerbs.size())];
            }
            text += *word;
            if (++words_in_sentence >= sentence_target) {
                text += ".\n";
                words_in_sentence = 0;
                sentence_target = 6 + rng.below(8);
            } else {
                text += ' ';
            }
        }
        if (!text.empty() && text.back() == ' ') {
            text.back() = '\n';
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "cannot open " << path << "\n";
        return 1;
    }
    out << text;
    std::cout << "wrote " << text.size() << " bytes to " << path << "\n";
    return 0;
}
