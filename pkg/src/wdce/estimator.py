"""scikit-learn compatible classifier around :class:`~wdce.model.WdceModel`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted

from . import tensor as tn
from .backbone import BackboneConfig, default_edges
from .model import TrainConfig, WdceModel
from .training import fit as fit_model


def _check_skeletons(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
    if X.ndim != 4:
        raise ValueError(f"expected skeleton batches shaped (N, C_in, T, V), got {X.shape}")
    if X.shape[2] % 2:
        raise ValueError(f"frame count T must be even, got {X.shape[2]}")
    return X


class WDCEClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Skeleton action classifier with wavelet decoupling and prototype contrast.

    ``X`` is ``(n_samples, C_in, T, V)``.  ``transform`` returns the pooled
    fused features, one row per sample.
    """

    def __init__(
        self,
        n_stgc=3,
        n_ssa=2,
        channels=(16, 32),
        heads=2,
        tcn_kernel=9,
        d_att=8,
        alpha=0.9,
        beta=0.1,
        tau=0.1,
        proto_momentum=0.9,
        lambda_fuse=0.4,
        lambda_salient=0.2,
        lambda_proto=0.4,
        lr=0.1,
        momentum=0.9,
        weight_decay=0.0004,
        clip_norm=1.0,
        milestones=(0.6, 0.8),
        gamma=0.1,
        epochs=25,
        batch_size=64,
        shuffle="once",
        use_dwt=True,
        use_da=True,
        use_ta=True,
        use_pcl=True,
        use_channel_split=False,
        edges=None,
        random_state=0,
    ):
        self.n_stgc = n_stgc
        self.n_ssa = n_ssa
        self.channels = channels
        self.heads = heads
        self.tcn_kernel = tcn_kernel
        self.d_att = d_att
        self.alpha = alpha
        self.beta = beta
        self.tau = tau
        self.proto_momentum = proto_momentum
        self.lambda_fuse = lambda_fuse
        self.lambda_salient = lambda_salient
        self.lambda_proto = lambda_proto
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.milestones = milestones
        self.gamma = gamma
        self.epochs = epochs
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.use_dwt = use_dwt
        self.use_da = use_da
        self.use_ta = use_ta
        self.use_pcl = use_pcl
        self.use_channel_split = use_channel_split
        self.edges = edges
        self.random_state = random_state

    @classmethod
    def from_configs(cls, train: TrainConfig, backbone: BackboneConfig, edges=None) -> "WDCEClassifier":
        kw = {k: v for k, v in vars(train).items() if k != "seed"}
        kw.update(vars(backbone))
        return cls(**kw, edges=edges, random_state=train.seed)

    def train_config(self) -> TrainConfig:
        names = set(TrainConfig.field_names()) - {"seed"}
        return TrainConfig(**{k: v for k, v in self.get_params().items() if k in names}, seed=int(self.random_state or 0))

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(self.n_stgc, self.n_ssa, self.channels, self.heads, self.tcn_kernel)

    def build_model(self, n_classes: int, c_in: int, T: int, V: int) -> WdceModel:
        edges = default_edges(V) if self.edges is None else self.edges
        return WdceModel(n_classes, T, V, c_in, self.train_config(), self.backbone_config(), edges)

    def fit(self, X, y, max_steps=None):
        X = _check_skeletons(X)
        check_classification_targets(y)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        y_enc = self._encoder.transform(y)
        n, c_in, T, V = X.shape
        self.model_ = self.build_model(len(self.classes_), c_in, T, V)
        self.history_, self.optimizer_ = fit_model(self.model_, X, y_enc, max_steps=max_steps)
        self.input_shape_ = (c_in, T, V)
        return self

    @classmethod
    def from_model(cls, model: WdceModel, classes=None) -> "WDCEClassifier":
        """Wrap an already trained model (e.g. restored from a checkpoint)."""
        est = cls.from_configs(model.train, model.backbone, [tuple(e) for e in model.graph.edges])
        est.model_ = model
        est.classes_ = np.arange(model.K) if classes is None else np.asarray(classes)
        est._encoder = LabelEncoder().fit(est.classes_)
        est.history_ = []
        est.input_shape_ = (model.c_in, model.T, model.V)
        return est

    def _validated(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = _check_skeletons(X)
        if X.shape[1:] != self.input_shape_:
            raise ValueError(f"X has sample shape {X.shape[1:]}, estimator was fitted on {self.input_shape_}")
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._validated(X)
        return self.model_.predict_logits(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        best = self.decision_function(X).argmax(axis=1)
        return self.classes_[best]

    def features(self, X, batch_size: int = 256) -> dict[str, np.ndarray]:
        """Pooled salient/subtle/fused features and trajectory attention maps."""
        X = self._validated(X)
        parts: dict[str, list] = {"salient": [], "subtle": [], "fused": [], "att": []}
        with tn.no_grad():
            for i in range(0, len(X), batch_size):
                out = self.model_.forward(X[i:i + batch_size])
                parts["fused"].append(out.fuse.data.mean(axis=(2, 3)))
                if out.salient is not None:
                    parts["salient"].append(out.salient.data.mean(axis=(2, 3)))
                    parts["subtle"].append(out.subtle.data.mean(axis=(2, 3)))
                if out.att is not None:
                    parts["att"].append(out.att.data)
        return {k: np.concatenate(v) for k, v in parts.items() if v}

    def transform(self, X) -> np.ndarray:
        return self.features(X)["fused"]
