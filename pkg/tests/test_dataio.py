import json

import numpy as np
import pytest

from postscore import dataio
from postscore.errors import DataFormatError
from postscore.model import CurvePoint, LinearModel, TrainingMeta, UserPrediction
from postscore.stats import CorrelationReport
from postscore.textproc import RawPost
from postscore.transfer import InstitutionScore


class TestPostsJsonl:
    def test_round_trip(self, tmp_path):
        posts = [
            RawPost("u1", "p1", "привет мир"),
            RawPost("u2", "p2", "", is_repost=True),
            RawPost("u2", "p3", 'with "quotes" and \\ backslash'),
        ]
        path = tmp_path / "posts.jsonl"
        dataio.write_posts_jsonl(path, posts)
        assert list(dataio.iter_posts_jsonl(path)) == posts

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"user_id":"u","post_id":"p","text":"ok"}\n{oops\n', encoding="utf-8")
        with pytest.raises(DataFormatError) as err:
            list(dataio.iter_posts_jsonl(path))
        assert ":2" in str(err.value)

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"user_id":"u","text":"ok"}\n', encoding="utf-8")
        with pytest.raises(DataFormatError, match="post_id"):
            list(dataio.iter_posts_jsonl(path))

    def test_wrong_type_rejected(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"user_id":1,"post_id":"p","text":"ok"}\n', encoding="utf-8")
        with pytest.raises(DataFormatError, match="type"):
            list(dataio.iter_posts_jsonl(path))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('\n{"user_id":"u","post_id":"p","text":"ok"}\n\n', encoding="utf-8")
        assert len(list(dataio.iter_posts_jsonl(path))) == 1


class TestLabelsCsv:
    def test_round_trip(self, tmp_path):
        labels = {"u1": 512.25, "u2": 488.0}
        path = tmp_path / "labels.csv"
        dataio.write_labels_csv(path, labels)
        assert dataio.read_labels_csv(path) == labels

    def test_header_required(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("user,value\nu1,5\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="header"):
            dataio.read_labels_csv(path)

    def test_duplicate_user_rejected(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("user_id,score\nu1,5\nu1,6\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="duplicate"):
            dataio.read_labels_csv(path)

    def test_bad_number_names_line(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("user_id,score\nu1,five\n", encoding="utf-8")
        with pytest.raises(DataFormatError) as err:
            dataio.read_labels_csv(path)
        assert ":2" in str(err.value)


class TestPredictionsCsv:
    def test_round_trip(self, tmp_path):
        preds = [UserPrediction("u1", 501.5, 3), UserPrediction("u2", 499.0, 0)]
        path = tmp_path / "pred.csv"
        dataio.write_predictions_csv(path, preds)
        assert dataio.read_predictions_csv(path) == preds


class TestOtherWriters:
    def test_report_csv_shape(self, tmp_path):
        rep = CorrelationReport(r=0.5, n=100, p_two_sided=1e-7, r_squared=0.25)
        path = tmp_path / "report.csv"
        dataio.write_report_csv(path, [("metric_x", rep)])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "metric,r,n,p,r_squared"
        assert lines[1].startswith("metric_x,0.5,100,")

    def test_institutions_csv_blank_reference(self, tmp_path):
        scores = [
            InstitutionScore("i1", 5, 40, 501.0, reference=480.0),
            InstitutionScore("i2", 6, 50, 502.0, reference=None),
        ]
        path = tmp_path / "inst.csv"
        dataio.write_institutions_csv(path, scores)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "institution_id,n_users,n_posts,predicted_mean,reference"
        assert lines[2].endswith(",")

    def test_curve_csv(self, tmp_path):
        path = tmp_path / "curve.csv"
        dataio.write_curve_csv(path, [CurvePoint(1, 0.2, 0.1, 0.3)])
        assert path.read_text(encoding="utf-8").splitlines()[0] == "n_posts,r,ci_low,ci_high"

    def test_features_header_is_the_documented_contract(self, tmp_path):
        from postscore.textproc import UserSurfaceFeatures

        f = UserSurfaceFeatures("u", 0.1, 0.0, 0.0, 1.0, 2.0, 3.0, 4, 1.5, n_posts=2)
        path = tmp_path / "features.csv"
        dataio.write_features_csv(path, [f])
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == (
            "user_id,caps_rate,emoji_rate,exclaim_rate,latin_rate,"
            "avg_post_len,avg_word_len,vocab_size,entropy_bits"
        )


class TestModelJson:
    def _model(self):
        meta = TrainingMeta(n_posts=4, n_users=2, target_mean=500.0, target_sd=80.0,
                            embedding_fingerprint="deadbeef")
        return LinearModel(weights=np.array([0.5, -1.5]), bias=2.5, lam=0.25, d=2,
                           training_meta=meta)

    def test_round_trip_with_extra_payload(self, tmp_path):
        path = tmp_path / "model.json"
        dataio.save_model_json(path, self._model(), extra={"vectorizer": "tfidf"})
        model, payload = dataio.load_model_json(path)
        assert model.bias == 2.5
        assert payload["vectorizer"] == "tfidf"
        assert payload["lambda"] == 0.25

    def test_schema_keys_pinned(self, tmp_path):
        path = tmp_path / "model.json"
        dataio.save_model_json(path, self._model())
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert set(payload) == {"format_version", "d", "lambda", "weights", "bias", "training_meta"}
        assert set(payload["training_meta"]) == {
            "n_posts", "n_users", "target_mean", "target_sd", "embedding_fingerprint"
        }

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(DataFormatError):
            dataio.load_model_json(path)


class TestManifest:
    def test_deterministic_and_hashes_inputs(self, tmp_path):
        data = tmp_path / "in.txt"
        data.write_text("payload", encoding="utf-8")
        out = tmp_path / "out.txt"
        out.write_text("result", encoding="utf-8")
        m1 = dataio.write_manifest(tmp_path, "cmd", {"k": 1}, {"in": data}, {"out": out}, seed=5)
        first = m1.read_bytes()
        m2 = dataio.write_manifest(tmp_path, "cmd", {"k": 1}, {"in": data}, {"out": out}, seed=5)
        assert m2.read_bytes() == first
        payload = json.loads(first)
        assert payload["seed"] == 5
        assert payload["inputs"]["in"]["sha256"] == dataio.sha256_file(data)
        assert "timestamp" not in payload
