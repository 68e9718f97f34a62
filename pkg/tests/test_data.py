import numpy as np
import pytest

from dabench import errors
from dabench.core import MASKED
from dabench.data import (
    SHIFT_KINDS,
    CSVSchema,
    SimShiftSpec,
    load_csv_dataset,
    make_shift_dataset,
)


class TestSimulatedShifts:
    @pytest.mark.parametrize("kind", SHIFT_KINDS)
    def test_generator_deterministic(self, kind):
        spec = SimShiftSpec(kind=kind, n_source=60, n_target=60, seed=5)
        a = make_shift_dataset(spec)
        b = make_shift_dataset(spec)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert a.fingerprint() == b.fingerprint()

    @pytest.mark.parametrize("kind", SHIFT_KINDS)
    def test_dataset_invariants(self, kind):
        ds = make_shift_dataset(SimShiftSpec(kind=kind, n_source=50,
                                             n_target=70, seed=1))
        assert ds.n_source == 50 and ds.n_target == 70
        assert ds.features.shape == (120, 2)
        assert not np.any(ds.labels == MASKED)

    def test_target_shift_proportions(self):
        spec = SimShiftSpec(kind="target", n_source=400, n_target=2000,
                            label_proportions=(0.9, 0.1), seed=0)
        ds = make_shift_dataset(spec)
        frac0 = np.mean(ds.target_labels == 0)
        assert abs(frac0 - 0.9) < 0.05

    def test_covariate_shift_preserves_conditionals(self):
        # target labels are drawn from the source posterior by construction:
        # within posterior bins the empirical class-1 rate matches the bin
        from dabench._sim_constants import SHIFT_NOISE_MULT
        from dabench.data import _BlobMixture

        spec = SimShiftSpec(kind="covariate", n_source=100, n_target=20000,
                            seed=2)
        ds = make_shift_dataset(spec)
        mixture = _BlobMixture(spec.noise * SHIFT_NOISE_MULT["covariate"])
        p1 = mixture.posterior_class1(ds.target_features)
        y = ds.target_labels
        for lo in np.arange(0.0, 1.0, 0.2):
            sel = (p1 >= lo) & (p1 < lo + 0.2)
            if sel.sum() > 300:
                assert abs(np.mean(y[sel]) - np.mean(p1[sel])) < 0.05

    def test_covariate_shift_classifier_transfers(self):
        from dabench.estimators import fit_kernel_logistic

        accs = []
        for seed in (2, 3, 4):
            spec = SimShiftSpec(kind="covariate", n_source=500, n_target=500,
                                noise=0.7, seed=seed)
            ds = make_shift_dataset(spec)
            pred = fit_kernel_logistic(ds.source_features, ds.source_labels,
                                       gamma=1.0, l2=1e-4)
            accs.append(np.mean(pred.predict(ds.target_features)
                                == ds.target_labels))
        assert np.mean(accs) >= 0.85

    def test_subspace_flip_geometry(self):
        # the target distribution is the source with coordinates swapped
        spec = SimShiftSpec(kind="subspace", n_source=4000, n_target=4000,
                            seed=3)
        ds = make_shift_dataset(spec)
        src_mean = ds.source_features.mean(axis=0)
        tgt_mean = ds.target_features.mean(axis=0)
        assert np.allclose(src_mean, tgt_mean[::-1], atol=0.1)

    def test_invalid_specs(self):
        with pytest.raises(errors.InvalidSpec):
            SimShiftSpec(kind="weird")
        with pytest.raises(errors.InvalidSpec):
            SimShiftSpec(kind="covariate", n_source=5)
        with pytest.raises(errors.InvalidSpec):
            SimShiftSpec(kind="covariate", noise=0.0)
        with pytest.raises(errors.InvalidSpec):
            SimShiftSpec(kind="target", label_proportions=(0.7, 0.7))


class TestCSVIngestion:
    def write(self, tmp_path, text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_round_trip(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "f1,f2,label,domain",
            "0.5,1.5,0,source",
            "1.0,-2.0,1,source",
            "0.25,0.75,0,target",
            "-1.0,0.125,1,target",
        ]))
        ds = load_csv_dataset(path)
        assert ds.features.shape == (4, 2)
        assert np.allclose(ds.features[0], [0.5, 1.5])
        assert np.allclose(ds.features[3], [-1.0, 0.125])
        assert ds.labels.tolist() == [0, 1, 0, 1]
        assert ds.domain.tolist() == [1, 1, -1, -1]

    def test_masked_target_labels_accepted(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "x,label,domain", "1.0,0,source", "2.0,1,source",
            "3.0,-1,target",
        ]))
        ds = load_csv_dataset(path)
        assert ds.target_labels.tolist() == [MASKED]

    def test_nan_rejected(self, tmp_path):
        path = self.write(tmp_path, "x,label,domain\nnan,0,source\n1.0,1,target\n")
        with pytest.raises(errors.NonNumericFeature):
            load_csv_dataset(path)

    def test_non_numeric_rejected(self, tmp_path):
        path = self.write(tmp_path, "x,label,domain\nabc,0,source\n1.0,1,target\n")
        with pytest.raises(errors.NonNumericFeature):
            load_csv_dataset(path)

    def test_missing_domain_column(self, tmp_path):
        path = self.write(tmp_path, "x,label\n1.0,0\n")
        with pytest.raises(errors.SchemaMismatch):
            load_csv_dataset(path)

    def test_unknown_domain_value(self, tmp_path):
        path = self.write(tmp_path, "x,label,domain\n1.0,0,src\n2.0,1,target\n")
        with pytest.raises(errors.SchemaMismatch):
            load_csv_dataset(path)

    def test_custom_schema(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "cls,origin,a,b",
            "0,train,0.0,1.0",
            "1,train,1.0,0.0",
            "1,deploy,0.5,0.5",
            "0,deploy,0.1,0.2",
        ]))
        schema = CSVSchema(label_column="cls", domain_column="origin",
                           source_values=("train",), target_values=("deploy",))
        ds = load_csv_dataset(path, schema)
        assert ds.n_source == 2 and ds.n_target == 2
        assert ds.features.shape == (4, 2)

    def test_one_domain_only(self, tmp_path):
        path = self.write(tmp_path, "x,label,domain\n1.0,0,source\n2.0,1,source\n")
        with pytest.raises(errors.EmptyDomain):
            load_csv_dataset(path)
