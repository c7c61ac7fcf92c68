#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "rolefuse/augment.hpp"
#include "rolefuse/bilinear.hpp"
#include "rolefuse/conll.hpp"
#include "rolefuse/crf.hpp"
#include "rolefuse/dataset.hpp"
#include "rolefuse/embeddings.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/eval.hpp"
#include "rolefuse/fusion.hpp"
#include "rolefuse/rng.hpp"

namespace py = pybind11;
using namespace rolefuse;
using nlohmann::json;

namespace {

json to_json(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Role role_of(const std::string& name) {
  auto r = parse_role(name);
  if (!r) throw DataError("unknown role '" + name + "'");
  return *r;
}

std::vector<Role> roles_of(const std::vector<std::string>& names) {
  std::vector<Role> out;
  for (const auto& n : names) out.push_back(role_of(n));
  return out;
}

py::dict record_to_dict(const MemeRecord& r) {
  py::dict d;
  d["id"] = r.id;
  d["image"] = r.image_ref;
  d["text"] = r.ocr_text;
  for (Role role : kAllRoles) {
    py::list names;
    for (const auto& a : r.annotations) {
      if (a.role == role) names.append(a.entity);
    }
    d[py::str(std::string(role_name(role)))] = names;
  }
  if (!r.source_id.empty()) d["source"] = r.source_id;
  return d;
}

MemeRecord record_from_dict(const py::dict& d) {
  MemeRecord r;
  r.id = d["id"].cast<std::string>();
  if (d.contains("image")) r.image_ref = d["image"].cast<std::string>();
  if (d.contains("text")) r.ocr_text = d["text"].cast<std::string>();
  if (d.contains("source")) r.source_id = d["source"].cast<std::string>();
  for (Role role : kAllRoles) {
    const std::string key(role_name(role));
    if (!d.contains(key)) continue;
    for (const auto& e : d[py::str(key)].cast<std::vector<std::string>>()) r.annotations.push_back({e, role});
  }
  return r;
}

py::dict instance_to_dict(const EntityInstance& e) {
  py::dict d;
  d["meme_id"] = e.meme_id;
  d["entity"] = e.entity_name;
  d["text"] = e.ocr_text;
  d["image"] = e.image_ref;
  d["role"] = std::string(role_name(e.role));
  d["source_id"] = e.source_id;
  d["augmented"] = e.augmented;
  return d;
}

EntityInstance instance_from_dict(const py::dict& d) {
  EntityInstance e;
  e.meme_id = d["meme_id"].cast<std::string>();
  e.entity_name = d["entity"].cast<std::string>();
  e.ocr_text = d["text"].cast<std::string>();
  if (d.contains("image")) e.image_ref = d["image"].cast<std::string>();
  e.role = role_of(d["role"].cast<std::string>());
  e.source_id = d.contains("source_id") ? d["source_id"].cast<std::string>() : e.meme_id;
  if (d.contains("augmented")) e.augmented = d["augmented"].cast<bool>();
  return e;
}

std::vector<EntityInstance> instances_from(const py::list& items) {
  std::vector<EntityInstance> out;
  for (const auto& item : items) out.push_back(instance_from_dict(item.cast<py::dict>()));
  return out;
}

py::list instances_to_list(const std::vector<EntityInstance>& v) {
  py::list out;
  for (const auto& e : v) out.append(instance_to_dict(e));
  return out;
}

py::dict counts_to_dict(const RoleCounts& rc) {
  py::dict d;
  for (Role r : kAllRoles) d[py::str(std::string(role_name(r)))] = rc[r];
  return d;
}

fusion::TrainConfig train_config_from(const py::dict& cfg) {
  fusion::TrainConfig tc;
  json j = to_json(cfg);
  if (j.contains("learning_rate")) tc.learning_rate = j["learning_rate"];
  if (j.contains("batch_size")) tc.batch_size = j["batch_size"];
  if (j.contains("epochs")) tc.epochs = j["epochs"];
  if (j.contains("seed")) tc.seed = j["seed"];
  if (j.contains("setting")) {
    auto s = fusion::parse_setting(j["setting"].get<std::string>());
    if (!s) throw DataError("unknown setting");
    tc.setting = *s;
  }
  if (j.contains("block")) {
    json merged = tc.block;
    merged.update(j["block"]);
    tc.block = merged.get<fusion::BlockConfig>();
  }
  tc.validate();
  return tc;
}

std::array<std::size_t, kNumRoles> copies_from(const std::vector<std::size_t>& v) {
  if (v.size() != kNumRoles) throw DataError("policy needs four copy counts");
  return {v[0], v[1], v[2], v[3]};
}

augment::SynonymLexicon lexicon_from(const py::object& lex) {
  if (lex.is_none()) return augment::SynonymLexicon::bundled();
  augment::SynonymLexicon out;
  for (const auto& [k, v] : lex.cast<std::map<std::string, std::vector<std::string>>>()) out.add(k, v);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core bindings for rolefuse";
  m.attr("__version__") = ROLEFUSE_VERSION;

  static py::exception<Error> error(m, "Error");
  static py::exception<DataError> data_error(m, "DataError", error.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", error.ptr());
  static py::exception<augment::ProviderError> provider_error(m, "ProviderError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const augment::ProviderError& e) {
      py::set_error(provider_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  // Data model.
  m.def("load_dataset", [](const std::filesystem::path& path) {
    py::list out;
    for (const auto& r : load_dataset(path)) out.append(record_to_dict(r));
    return out;
  });
  m.def("flatten_to_instances", [](const py::list& records) {
    std::vector<MemeRecord> recs;
    for (const auto& r : records) recs.push_back(record_from_dict(r.cast<py::dict>()));
    validate_records(recs);
    return instances_to_list(flatten_to_instances(recs));
  });
  m.def("class_distribution", [](const py::list& instances) {
    return counts_to_dict(class_distribution(instances_from(instances)));
  });

  // CoNLL.
  m.def("tokenize", &conll::tokenize, py::arg("text"));
  m.def(
      "to_bio",
      [](const py::dict& record, const std::string& mode) {
        auto md = conll::parse_mode(mode);
        if (!md) throw DataError("unknown mode '" + mode + "'");
        const auto seq = conll::to_bio(record_from_dict(record), *md);
        return std::make_pair(seq.tokens, seq.tags);
      },
      py::arg("record"), py::arg("mode") = "all_tokens");
  m.def("from_bio", [](const std::vector<std::string>& tokens, const std::vector<std::string>& tags) {
    conll::TaggedSequence seq;
    seq.tokens = tokens;
    seq.tags = tags;
    std::vector<std::pair<std::vector<std::string>, std::string>> out;
    for (const auto& s : conll::from_bio(seq)) out.emplace_back(s.tokens, std::string(role_name(s.role)));
    return out;
  });

  // CRF.
  m.def("crf_log_partition", py::overload_cast<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(&crf::log_partition),
        py::arg("emissions"), py::arg("transitions"));
  m.def("crf_viterbi", &crf::viterbi_path, py::arg("emissions"), py::arg("transitions"));
  py::class_<crf::CrfModel>(m, "CrfModel")
      .def_property_readonly("labels", &crf::CrfModel::labels)
      .def_property_readonly("num_features", &crf::CrfModel::num_features)
      .def("tag", [](const crf::CrfModel& model, const std::vector<std::string>& tokens) {
        return crf::viterbi(model, tokens);
      })
      .def("log_partition", [](const crf::CrfModel& model, const std::vector<std::string>& tokens) {
        return crf::log_partition(model, tokens);
      })
      .def("save", [](const crf::CrfModel& model, const std::filesystem::path& p) { crf::save_model(p, model); })
      .def_static("load", &crf::load_model);
  m.def(
      "train_crf",
      [](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& data,
         double l2, int max_iterations) {
        std::vector<conll::TaggedSequence> seqs;
        for (const auto& [tokens, tags] : data) {
          conll::TaggedSequence s;
          s.tokens = tokens;
          s.tags = tags;
          seqs.push_back(std::move(s));
        }
        crf::TrainOptions opts;
        opts.l2 = l2;
        opts.max_iterations = max_iterations;
        auto result = crf::train_crf(seqs, crf::FeatureSet{}, opts);
        return std::make_pair(std::move(result.model), result.objective_trace);
      },
      py::arg("data"), py::arg("l2") = 1.0, py::arg("max_iterations") = 200);

  // Embeddings.
  m.def("read_table", [](const std::filesystem::path& path) {
    const auto t = read_table(path);
    py::dict out;
    for (const auto& [id, v] : t.entries()) out[py::str(id)] = py::array_t<double>(v.size(), v.data());
    return py::make_tuple(t.dim(), out);
  });
  m.def("write_table", [](const std::filesystem::path& path, std::size_t dim,
                          const std::map<std::string, std::vector<double>>& entries) {
    EmbeddingTable t(dim);
    for (const auto& [id, v] : entries) t.insert(id, v);
    write_table(path, t);
  });

  // Fusion.
  m.def("bilinear_contract", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& t,
                                const std::vector<double>& x1, const std::vector<double>& x2) {
    if (t.ndim() != 3) throw DataError("tensor must be 3-dimensional");
    fusion::BilinearTensor bt(t.shape(0), t.shape(1), t.shape(2));
    auto r = t.unchecked<3>();
    for (py::ssize_t i = 0; i < t.shape(0); ++i)
      for (py::ssize_t j = 0; j < t.shape(1); ++j)
        for (py::ssize_t k = 0; k < t.shape(2); ++k) bt(i, j, k) = r(i, j, k);
    return fusion::bilinear_contract(bt, x1, x2);
  });
  py::class_<fusion::BlockFusionModel>(m, "FusionModel")
      .def_static(
          "create",
          [](const py::dict& block, std::size_t entity_dim, std::size_t context_dim, std::uint64_t seed) {
            json merged = fusion::BlockConfig{};
            merged.update(to_json(block));
            return fusion::BlockFusionModel::create(merged.get<fusion::BlockConfig>(), entity_dim,
                                                    context_dim, seed);
          },
          py::arg("block"), py::arg("entity_dim"), py::arg("context_dim"), py::arg("seed") = 0)
      .def_property_readonly("config", [](const fusion::BlockFusionModel& mdl) { return from_json(mdl.config()); })
      .def_property_readonly("entity_dim", &fusion::BlockFusionModel::entity_dim)
      .def_property_readonly("context_dim", &fusion::BlockFusionModel::context_dim)
      .def("parameters",
           [](const fusion::BlockFusionModel& mdl) {
             py::dict out;
             mdl.params().for_each([&](const fusion::Parameters::TensorView& t) {
               out[py::str(t.name)] = Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(t.data, t.rows, t.cols));
             });
             return out;
           })
      .def("fuse", &fusion::fuse)
      .def("predict",
           [](const fusion::BlockFusionModel& mdl, const Eigen::MatrixXd& entities, const Eigen::MatrixXd& contexts) {
             std::vector<std::string> out;
             const std::vector<Role> dummy(static_cast<std::size_t>(entities.rows()), Role::kHero);
             for (Role r : fusion::predict_batch(mdl, {entities, contexts, dummy})) out.emplace_back(role_name(r));
             return out;
           })
      .def("save",
           [](const fusion::BlockFusionModel& mdl, const std::filesystem::path& p) {
             fusion::save_checkpoint(p, mdl, json::object());
           })
      .def_static("load", [](const std::filesystem::path& p) { return fusion::load_checkpoint(p); });
  m.def("assemble_full_tensor", [](const fusion::BlockFusionModel& mdl) {
    const auto t = fusion::assemble_full_tensor(mdl);
    py::array_t<double> out({t.dim1(), t.dim2(), t.dim3()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
  });
  m.def("block_fusion_forward", [](const fusion::BlockFusionModel& mdl, const Eigen::VectorXd& entity,
                                   const Eigen::VectorXd& context) {
    return fusion::block_fusion_forward(mdl, entity, context);
  });
  m.def(
      "train_fusion",
      [](const Eigen::MatrixXd& entities, const Eigen::MatrixXd& contexts,
         const std::vector<std::string>& labels, const py::dict& config) {
        const auto cfg = train_config_from(config);
        auto result = fusion::train_fusion(cfg, fusion::InputBatch{entities, contexts, roles_of(labels)});
        return std::make_pair(std::move(result.model), result.loss_trace);
      },
      py::arg("entities"), py::arg("contexts"), py::arg("labels"), py::arg("config") = py::dict());

  // Augmentation.
  m.def(
      "substitute",
      [](const std::string& text, const std::string& entity, const py::object& lexicon, double p,
         std::uint64_t seed) {
        Rng rng(seed);
        return augment::substitute(text, entity, lexicon_from(lexicon), p, rng);
      },
      py::arg("text"), py::arg("entity"), py::arg("lexicon") = py::none(), py::arg("p") = 0.3,
      py::arg("seed") = 0);
  m.def(
      "balance",
      [](const py::list& instances, const std::vector<std::size_t>& copies, double p, std::uint64_t seed,
         const py::object& lexicon) {
        augment::AugmentPolicy policy;
        policy.copies = copies_from(copies);
        policy.p = p;
        policy.seed = seed;
        return instances_to_list(augment::balance(instances_from(instances), lexicon_from(lexicon), policy));
      },
      py::arg("instances"), py::arg("copies") = std::vector<std::size_t>{6, 2, 3, 0}, py::arg("p") = 0.3,
      py::arg("seed") = 0, py::arg("lexicon") = py::none());

  // Evaluation.
  m.def("evaluate", [](const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
    return from_json(eval::evaluate(roles_of(gold), roles_of(pred)).to_json());
  });
  m.def("sequence_evaluate", [](const std::vector<std::vector<std::string>>& gold,
                                const std::vector<std::vector<std::string>>& pred) {
    return from_json(eval::sequence_evaluate(gold, pred).to_json());
  });
  m.def("majority_baseline", [](const std::map<std::string, std::size_t>& counts) {
    RoleCounts rc;
    for (const auto& [name, n] : counts) {
      rc.counts[index(role_of(name))] = n;
      rc.total += n;
    }
    return std::string(role_name(eval::majority_baseline(rc).role()));
  });
}
