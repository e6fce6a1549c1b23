#include <cstring>
#include <fstream>

#include "posecal/forest.hpp"

namespace posecal {

// File layout (all integers and floats little-endian):
//   magic "PCF1"
//   u32 version (1)
//   u32 feature_dim, u32 n_forests
//   config: u32 n_trees, u32 max_depth, u32 n_classes,
//           u32 features_per_split, u32 min_samples_leaf, u8 bootstrap,
//           f64 laplace, u64 seed
//   per forest: u32 patch_index, u32 n_trees,
//     per tree: u32 n_nodes, nodes in preorder:
//       u8 tag (0 = split, 1 = leaf)
//       split: u32 feature, f32 threshold, u32 left_id, u32 right_id
//       leaf:  u32 counts[n_classes]

namespace {

constexpr char kMagic[4] = {'P', 'C', 'F', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  buf.append(b, 4);
}
void put_u64(std::string& buf, uint64_t v) {
  put_u32(buf, static_cast<uint32_t>(v));
  put_u32(buf, static_cast<uint32_t>(v >> 32));
}
void put_f32(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}
void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw IoError("load_forests: truncated model file");
  }
  uint8_t u8() {
    need(1);
    return *p++;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    p += 4;
    return v;
  }
  uint64_t u64() {
    const uint64_t lo = u32();
    return lo | (static_cast<uint64_t>(u32()) << 32);
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

// Assigns preorder node ids over the tree's split/leaf arrays:
// id -> (is_leaf, array index).
struct FlatNode {
  bool is_leaf;
  std::size_t index;
};

void flatten(const DecisionTree& tree, int32_t node,
             std::vector<FlatNode>& out, std::vector<uint32_t>& id_of_split,
             std::vector<uint32_t>& id_of_leaf) {
  if (node < 0) {
    id_of_leaf[static_cast<std::size_t>(~node)] = static_cast<uint32_t>(out.size());
    out.push_back({true, static_cast<std::size_t>(~node)});
    return;
  }
  id_of_split[static_cast<std::size_t>(node)] = static_cast<uint32_t>(out.size());
  out.push_back({false, static_cast<std::size_t>(node)});
  const auto& s = tree.splits[static_cast<std::size_t>(node)];
  flatten(tree, s.left, out, id_of_split, id_of_leaf);
  flatten(tree, s.right, out, id_of_split, id_of_leaf);
}

void put_tree(std::string& buf, const DecisionTree& tree, int n_classes) {
  std::vector<FlatNode> order;
  std::vector<uint32_t> id_of_split(tree.splits.size());
  std::vector<uint32_t> id_of_leaf(tree.leaves.size());
  flatten(tree, tree.root, order, id_of_split, id_of_leaf);

  auto id_of = [&](int32_t ref) {
    return ref >= 0 ? id_of_split[static_cast<std::size_t>(ref)]
                    : id_of_leaf[static_cast<std::size_t>(~ref)];
  };

  put_u32(buf, static_cast<uint32_t>(order.size()));
  for (const FlatNode& node : order) {
    if (node.is_leaf) {
      buf.push_back(1);
      const auto& leaf = tree.leaves[node.index];
      for (int v = 0; v < n_classes; ++v) put_u32(buf, leaf[static_cast<std::size_t>(v)]);
    } else {
      buf.push_back(0);
      const auto& s = tree.splits[node.index];
      put_u32(buf, s.feature);
      put_f32(buf, s.threshold);
      put_u32(buf, id_of(s.left));
      put_u32(buf, id_of(s.right));
    }
  }
}

DecisionTree read_tree(Reader& r, int n_classes, uint32_t feature_dim) {
  const uint32_t n_nodes = r.u32();
  if (n_nodes == 0) throw IoError("load_forests: empty tree");

  // First pass: record each node; second pass: translate ids to
  // split/leaf refs (children always follow their parent in preorder,
  // but ids may reference any node, so resolve after reading all).
  struct RawNode {
    bool is_leaf;
    uint32_t feature;
    float threshold;
    uint32_t left, right;
    DecisionTree::LeafCounts counts;
  };
  std::vector<RawNode> raw(n_nodes);
  DecisionTree tree;
  std::vector<int32_t> ref_of(n_nodes);
  for (uint32_t i = 0; i < n_nodes; ++i) {
    const uint8_t tag = r.u8();
    if (tag == 1) {
      raw[i].is_leaf = true;
      for (int v = 0; v < n_classes; ++v) raw[i].counts[static_cast<std::size_t>(v)] = r.u32();
      tree.leaves.push_back(raw[i].counts);
      ref_of[i] = DecisionTree::leaf_ref(tree.leaves.size() - 1);
    } else if (tag == 0) {
      raw[i].is_leaf = false;
      raw[i].feature = r.u32();
      raw[i].threshold = r.f32();
      raw[i].left = r.u32();
      raw[i].right = r.u32();
      if (raw[i].feature >= feature_dim)
        throw IoError("load_forests: feature index out of range");
      tree.splits.push_back({raw[i].feature, raw[i].threshold, 0, 0});
      ref_of[i] = static_cast<int32_t>(tree.splits.size() - 1);
    } else {
      throw IoError("load_forests: bad node tag");
    }
  }
  std::size_t split_index = 0;
  std::vector<uint32_t> referenced(n_nodes, 0);
  for (uint32_t i = 0; i < n_nodes; ++i) {
    if (raw[i].is_leaf) continue;
    if (raw[i].left >= n_nodes || raw[i].right >= n_nodes)
      throw IoError("load_forests: child id out of range");
    tree.splits[split_index].left = ref_of[raw[i].left];
    tree.splits[split_index].right = ref_of[raw[i].right];
    ++referenced[raw[i].left];
    ++referenced[raw[i].right];
    ++split_index;
  }
  if (referenced[0] != 0) throw IoError("load_forests: root is referenced");
  for (uint32_t i = 1; i < n_nodes; ++i)
    if (referenced[i] != 1)
      throw IoError("load_forests: node not referenced exactly once");
  tree.root = ref_of[0];
  return tree;
}

}  // namespace

void save_forests(const ForestModelFile& model,
                  const std::filesystem::path& path) {
  save_forests(model.feature_dim, model.config, model.forests, path);
}

void save_forests(int feature_dim, const ForestConfig& c,
                  std::span<const Forest> forests,
                  const std::filesystem::path& path) {
  if (forests.empty())
    throw std::invalid_argument("save_forests: no forests");
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(feature_dim));
  put_u32(buf, static_cast<uint32_t>(forests.size()));
  put_u32(buf, static_cast<uint32_t>(c.n_trees));
  put_u32(buf, static_cast<uint32_t>(c.max_depth));
  put_u32(buf, static_cast<uint32_t>(c.n_classes));
  put_u32(buf, static_cast<uint32_t>(c.features_per_split));
  put_u32(buf, static_cast<uint32_t>(c.min_samples_leaf));
  buf.push_back(c.bootstrap ? 1 : 0);
  put_f64(buf, c.laplace);
  put_u64(buf, c.seed);

  for (const Forest& forest : forests) {
    put_u32(buf, static_cast<uint32_t>(forest.patch_index));
    put_u32(buf, static_cast<uint32_t>(forest.trees.size()));
    for (const DecisionTree& tree : forest.trees)
      put_tree(buf, tree, c.n_classes);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_forests: cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("save_forests: write failed for " + path.string());
}

ForestModelFile load_forests(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_forests: cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(data.data()),
           reinterpret_cast<const unsigned char*>(data.data()) + data.size()};

  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0)
    throw IoError("load_forests: bad magic in " + path.string());
  r.p += 4;
  if (r.u32() != kVersion)
    throw IoError("load_forests: unsupported version in " + path.string());

  ForestModelFile model;
  model.feature_dim = static_cast<int>(r.u32());
  const uint32_t n_forests = r.u32();
  ForestConfig& c = model.config;
  c.n_trees = static_cast<int>(r.u32());
  c.max_depth = static_cast<int>(r.u32());
  c.n_classes = static_cast<int>(r.u32());
  c.features_per_split = static_cast<int>(r.u32());
  c.min_samples_leaf = static_cast<int>(r.u32());
  c.bootstrap = r.u8() != 0;
  c.laplace = r.f64();
  c.seed = r.u64();
  if (c.n_classes != kNumViews)
    throw IoError("load_forests: unsupported class count");

  model.forests.resize(n_forests);
  for (uint32_t f = 0; f < n_forests; ++f) {
    Forest& forest = model.forests[f];
    forest.config = c;
    forest.patch_index = static_cast<int>(r.u32());
    const uint32_t n_trees = r.u32();
    forest.trees.reserve(n_trees);
    for (uint32_t t = 0; t < n_trees; ++t)
      forest.trees.push_back(read_tree(r, c.n_classes, static_cast<uint32_t>(model.feature_dim)));
  }
  if (r.p != r.end) throw IoError("load_forests: trailing bytes in " + path.string());
  return model;
}

}  // namespace posecal
