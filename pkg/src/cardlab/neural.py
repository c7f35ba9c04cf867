"""Dense and recurrent regression nets written directly in numpy (float64).

Both nets predict standardized log-selectivities. Inputs are standardized
per feature with statistics fitted on the training split.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .featurize import EncodingSpec, LabelTransform, encode_flat, encode_sequence
from .query import JoinSequence, Query

FORMAT_VERSION = 1
INIT_STD = 0.05
INIT_BIAS = 0.01
LEAKY_SLOPE = 0.01


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch


class NotFittedError(RuntimeError):
    pass


def leaky_relu(z, alpha: float = LEAKY_SLOPE):
    return np.where(z > 0, z, alpha * z)


def leaky_relu_grad(z, alpha: float = LEAKY_SLOPE):
    return np.where(z > 0, 1.0, alpha)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, X):
        return (X - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj) -> "Standardizer":
        return cls(np.array(obj["mean"], dtype=np.float64), np.array(obj["std"], dtype=np.float64))


def parse_arch(text: str) -> tuple[int, int]:
    """``"100w,1d"`` -> ``(100, 1)``."""
    try:
        w, d = (p.strip() for p in text.split(","))
        if not (w.endswith("w") and d.endswith("d")):
            raise ValueError
        width, depth = int(w[:-1]), int(d[:-1])
    except ValueError:
        raise ValueError(f"arch spec {text!r} is not of the form <width>w,<depth>d") from None
    if width < 1 or depth < 1:
        raise ValueError("width and depth must be >= 1")
    return width, depth


class _Net:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.input_standardizer: Standardizer | None = None
        self.label_transform: LabelTransform | None = None
        self.seed: int | None = None

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def weight_names(self) -> list[str]:
        return [k for k in self.params if k.startswith("W")]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def copy(self):
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def _check_fitted(self):
        if self.input_standardizer is None or self.label_transform is None:
            raise NotFittedError("standardizers are not fitted; train the net first")

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "arch": self.arch_json(),
            "seeds": {"init": self.seed},
            "standardizers": {
                "input": None if self.input_standardizer is None else self.input_standardizer.to_json(),
                "label": None if self.label_transform is None else self.label_transform.to_json(),
            },
            "parameters": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")


class DenseNet(_Net):
    """Fully connected net; residual layers compute ``f(W h + b + h)``."""

    kind = "dense"

    def __init__(self, input_width: int, hidden_widths, residual: bool = True, alpha: float = LEAKY_SLOPE):
        super().__init__()
        hidden_widths = list(hidden_widths)
        if input_width < 1 or not hidden_widths or min(hidden_widths) < 1:
            raise ValueError("all widths must be >= 1")
        self.input_width = input_width
        self.hidden_widths = hidden_widths
        self.residual = residual
        self.alpha = alpha
        dims = [input_width] + hidden_widths
        for i in range(len(hidden_widths)):
            self.params[f"W{i}"] = np.zeros((dims[i], dims[i + 1]))
            self.params[f"b{i}"] = np.zeros(dims[i + 1])
        self.params["Wout"] = np.zeros((dims[-1], 1))
        self.params["bout"] = np.zeros(1)

    def _skips(self, i: int) -> bool:
        return self.residual and i > 0 and self.hidden_widths[i - 1] == self.hidden_widths[i]

    def arch_json(self) -> dict:
        return {"kind": self.kind, "input_width": self.input_width, "hidden_widths": self.hidden_widths,
                "residual": self.residual, "alpha": self.alpha}

    def forward_std(self, Z):
        """Forward pass on standardized inputs; returns (predictions, cache)."""
        h = Z
        cache = []
        for i in range(len(self.hidden_widths)):
            a = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if self._skips(i):
                a = a + h
            cache.append((h, a))
            h = leaky_relu(a, self.alpha)
        y = (h @ self.params["Wout"])[:, 0] + self.params["bout"][0]
        return y, (cache, h)

    def loss_and_grads(self, Z, target, weight_decay: float = 0.0):
        y, (cache, h) = self.forward_std(Z)
        n = len(target)
        err = y - target
        loss = float(np.mean(err**2))
        grads = {}
        dy = (2.0 / n) * err
        grads["Wout"] = h.T @ dy[:, None]
        grads["bout"] = np.array([dy.sum()])
        dh = dy[:, None] @ self.params["Wout"].T
        for i in reversed(range(len(self.hidden_widths))):
            h_prev, a = cache[i]
            da = dh * leaky_relu_grad(a, self.alpha)
            grads[f"W{i}"] = h_prev.T @ da
            grads[f"b{i}"] = da.sum(axis=0)
            dh = da @ self.params[f"W{i}"].T
            if self._skips(i):
                dh = dh + da
        if weight_decay:
            for k in self.weight_names():
                loss += 0.5 * weight_decay * float(np.sum(self.params[k] ** 2))
                grads[k] = grads[k] + weight_decay * self.params[k]
        return loss, {k: grads[k] for k in self.params}

    def standardize(self, X):
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_width:
            raise ValueError(f"input width {X.shape[1]} != {self.input_width}")
        return self.input_standardizer.apply(X)

    def predict_transformed(self, X):
        return self.forward_std(self.standardize(X))[0]

    def predict_selectivity(self, X):
        return self.label_transform.invert(self.predict_transformed(X))

    def latents(self, X):
        return self.forward_std(self.standardize(X))[1][1]


class RecurrentNet(_Net):
    """Stacked tanh cells; layers above the first add their input (residual wrapper)."""

    kind = "recurrent"

    def __init__(self, input_width: int, hidden_width: int, depth: int = 1, mode: str = "many_to_many"):
        super().__init__()
        if input_width < 1 or hidden_width < 1 or depth < 1:
            raise ValueError("widths and depth must be >= 1")
        if mode not in ("many_to_many", "many_to_one"):
            raise ValueError(f"unknown mode {mode!r}")
        self.input_width = input_width
        self.hidden_width = hidden_width
        self.depth = depth
        self.mode = mode
        for layer in range(depth):
            fan_in = input_width if layer == 0 else hidden_width
            self.params[f"Wx{layer}"] = np.zeros((fan_in, hidden_width))
            self.params[f"Wh{layer}"] = np.zeros((hidden_width, hidden_width))
            self.params[f"b{layer}"] = np.zeros(hidden_width)
        self.params["Wout"] = np.zeros((hidden_width, 1))
        self.params["bout"] = np.zeros(1)

    def arch_json(self) -> dict:
        return {"kind": self.kind, "input_width": self.input_width, "hidden_width": self.hidden_width,
                "depth": self.depth, "mode": self.mode}

    def forward_std(self, Z):
        """``Z`` is (n, T, width), standardized and zero-padded; returns (n, T) outputs and cache.

        Every product is taken one timestep at a time so step t's output does
        not depend on how many steps follow it, bit for bit.
        """
        n, T, _ = Z.shape
        inputs = Z
        cache = []
        for layer in range(self.depth):
            Wx, Wh, b = self.params[f"Wx{layer}"], self.params[f"Wh{layer}"], self.params[f"b{layer}"]
            s = np.empty((n, T, self.hidden_width))
            out = np.empty_like(s)
            prev = np.zeros((n, self.hidden_width))
            for t in range(T):
                s[:, t] = np.tanh(inputs[:, t] @ Wx + b + prev @ Wh)
                out[:, t] = s[:, t] + inputs[:, t] if layer > 0 else s[:, t]
                prev = out[:, t]
            cache.append((inputs, s, out))
            inputs = out
        y = np.empty((n, T))
        for t in range(T):
            y[:, t] = (inputs[:, t] @ self.params["Wout"])[:, 0] + self.params["bout"][0]
        return y, cache

    def _loss_mask(self, mask):
        if self.mode == "many_to_many":
            return mask
        last = np.zeros_like(mask)
        lengths = mask.sum(axis=1).astype(int)
        last[np.arange(len(mask)), lengths - 1] = 1.0
        return last

    def loss_and_grads(self, Z, target, mask, weight_decay: float = 0.0):
        y, cache = self.forward_std(Z)
        m = self._loss_mask(mask)
        count = m.sum()
        err = (y - target) * m
        loss = float(np.sum(err**2) / count)
        dy = (2.0 / count) * err
        top = cache[-1][2]
        grads = {"Wout": np.einsum("nth,nt->h", top, dy)[:, None], "bout": np.array([dy.sum()])}
        dout = dy[..., None] * self.params["Wout"][:, 0]
        for layer in reversed(range(self.depth)):
            inputs, s, out = cache[layer]
            Wx, Wh = self.params[f"Wx{layer}"], self.params[f"Wh{layer}"]
            n, T, _ = s.shape
            dWx = np.zeros_like(Wx)
            dWh = np.zeros_like(Wh)
            db = np.zeros(self.hidden_width)
            dinputs = np.zeros_like(inputs)
            carry = np.zeros((n, self.hidden_width))
            for t in reversed(range(T)):
                dh = dout[:, t] + carry
                dpre = dh * (1.0 - s[:, t] ** 2)
                prev = out[:, t - 1] if t > 0 else np.zeros((n, self.hidden_width))
                dWx += inputs[:, t].T @ dpre
                dWh += prev.T @ dpre
                db += dpre.sum(axis=0)
                carry = dpre @ Wh.T
                dinputs[:, t] = dpre @ Wx.T
                if layer > 0:
                    dinputs[:, t] += dh
            grads[f"Wx{layer}"], grads[f"Wh{layer}"], grads[f"b{layer}"] = dWx, dWh, db
            dout = dinputs
        if weight_decay:
            for k in self.weight_names():
                loss += 0.5 * weight_decay * float(np.sum(self.params[k] ** 2))
                grads[k] = grads[k] + weight_decay * self.params[k]
        return loss, {k: grads[k] for k in self.params}

    def standardize(self, sequences):
        self._check_fitted()
        Z, mask = pad_sequences(sequences, self.input_width)
        Z = np.where(mask[..., None] > 0, self.input_standardizer.apply(Z), 0.0)
        return Z, mask

    def predict_transformed(self, sequences):
        """Per-step outputs, one array per input sequence."""
        Z, mask = self.standardize(sequences)
        y, _ = self.forward_std(Z)
        lengths = mask.sum(axis=1).astype(int)
        return [y[i, :lengths[i]] for i in range(len(lengths))]

    def predict_last_transformed(self, sequences):
        return np.array([p[-1] for p in self.predict_transformed(sequences)])

    def predict_selectivity(self, sequences):
        return self.label_transform.invert(self.predict_last_transformed(sequences))

    def latents(self, sequences):
        Z, mask = self.standardize(sequences)
        _, cache = self.forward_std(Z)
        lengths = mask.sum(axis=1).astype(int)
        return cache[-1][2][np.arange(len(lengths)), lengths - 1]


def pad_sequences(sequences, width: int):
    sequences = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in sequences]
    for s in sequences:
        if s.shape[1] != width:
            raise ValueError(f"input width {s.shape[1]} != {width}")
    T = max(len(s) for s in sequences)
    Z = np.zeros((len(sequences), T, width))
    mask = np.zeros((len(sequences), T))
    for i, s in enumerate(sequences):
        Z[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return Z, mask


def init(arch: str, input_width: int, seed: int, recurrent: bool = False, **options):
    """Build a net from ``"<width>w,<depth>d"`` with N(0, 0.05^2) weights and 0.01 biases."""
    width, depth = parse_arch(arch)
    if recurrent:
        net = RecurrentNet(input_width, width, depth, **options)
    else:
        net = DenseNet(input_width, [width] * depth, **options)
    initialize(net, seed)
    return net


def initialize(net: _Net, seed: int):
    rng = np.random.default_rng(seed)
    for k, p in net.params.items():
        if k.startswith("W"):
            p[...] = rng.normal(0.0, INIT_STD, size=p.shape)
        else:
            p[...] = INIT_BIAS
    net.seed = seed
    return net


def forward(net: _Net, inputs):
    """Transformed-space predictions and latents for raw (unstandardized) inputs."""
    if isinstance(net, DenseNet):
        return net.predict_transformed(inputs), net.latents(inputs)
    preds = net.predict_transformed(inputs)
    Z, mask = net.standardize(inputs)
    _, cache = net.forward_std(Z)
    lengths = mask.sum(axis=1).astype(int)
    return preds, [cache[-1][2][i, :lengths[i]] for i in range(len(lengths))]


def extract_latents(net: _Net, inputs) -> np.ndarray:
    return net.latents(inputs)


def save_latents_csv(path, latents) -> None:
    np.savetxt(path, np.atleast_2d(latents), delimiter=",", fmt="%.17g")


# --- data containers -------------------------------------------------------

@dataclass
class FlatData:
    X: np.ndarray
    selectivity: np.ndarray

    def __len__(self):
        return len(self.selectivity)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return FlatData(self.X[idx], self.selectivity[idx])


@dataclass
class SequenceData:
    sequences: list
    selectivities: list  # per-step prefix selectivities

    def __len__(self):
        return len(self.sequences)

    def subset(self, idx):
        return SequenceData([self.sequences[i] for i in idx], [self.selectivities[i] for i in idx])


def flat_data(spec: EncodingSpec, examples) -> FlatData:
    X = np.array([encode_flat(spec, ex.query) for ex in examples]).reshape(len(examples), spec.width)
    return FlatData(X, np.array([ex.selectivity for ex in examples], dtype=np.float64))


def sequence_data(spec: EncodingSpec, examples) -> SequenceData:
    seqs, sels = [], []
    for ex in examples:
        seqs.append(encode_sequence(spec, ex.sequence))
        prefixes = ex.prefix_selectivities
        if prefixes is None:
            prefixes = [np.nan] * (len(ex.sequence) - 1) + [ex.selectivity]
        sels.append(np.array(prefixes, dtype=np.float64))
    return SequenceData(seqs, sels)


class _Prepared:
    """Standardized tensors for one dataset under a fitted net."""

    def __init__(self, net, data):
        self.recurrent = isinstance(net, RecurrentNet)
        if self.recurrent:
            self.Z, self.mask = net.standardize(data.sequences)
            T = self.Z.shape[1]
            self.target = np.zeros((len(data), T))
            for i, s in enumerate(data.selectivities):
                known = np.isfinite(s)
                self.target[i, :len(s)] = np.where(known, net.label_transform.apply(np.where(known, s, 1.0)), 0.0)
                self.mask[i, :len(s)] *= known if net.mode == "many_to_many" else 1.0
        else:
            self.Z = net.standardize(data.X)
            self.target = net.label_transform.apply(data.selectivity)

    def __len__(self):
        return len(self.Z)

    def batch(self, idx):
        if self.recurrent:
            Z, target, mask = self.Z[idx], self.target[idx], self.mask[idx]
            T = int(np.max(np.nonzero(mask.any(axis=0))[0])) + 1 if mask.any() else 1
            return (Z[:, :T], target[:, :T], mask[:, :T])
        return (self.Z[idx], self.target[idx])


def fit_scalers(net: _Net, data) -> None:
    if isinstance(net, RecurrentNet):
        net.input_standardizer = Standardizer.fit(np.concatenate(data.sequences, axis=0))
        labels = np.concatenate(data.selectivities)
        net.label_transform = LabelTransform.fit(labels[np.isfinite(labels)])
    else:
        net.input_standardizer = Standardizer.fit(data.X)
        net.label_transform = LabelTransform.fit(data.selectivity)


def gradients(net: _Net, batch, weight_decay: float = 0.0):
    """(loss, per-parameter gradient of the batch MSE) on standardized tensors."""
    return net.loss_and_grads(*batch, weight_decay=weight_decay)


def loss(net: _Net, batch) -> float:
    if isinstance(net, RecurrentNet):
        Z, target, mask = batch
        y, _ = net.forward_std(Z)
        m = net._loss_mask(mask)
        return float(np.sum(((y - target) * m) ** 2) / m.sum())
    Z, target = batch
    y, _ = net.forward_std(Z)
    return float(np.mean((y - target) ** 2))


# --- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: _Net, lr: float = 1e-3, **kw) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in net.params.items()},
                   {k: np.zeros_like(p) for k, p in net.params.items()}, 0, lr, **kw)


def adam_step(net: _Net, grads: dict, state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``net.params``."""
    if grads.keys() != state.m.keys():
        raise ValueError("gradient and optimizer state parameters differ")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        if g.shape != state.m[k].shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {state.m[k].shape}")
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        net.params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --- training ----------------------------------------------------------------

@dataclass
class Hyper:
    lr: float = 1e-3
    batch: int = 128
    max_epochs: int = 500
    patience: int | None = 20
    min_delta: float = 1e-4
    weight_decay: float = 0.0


@dataclass
class TrainReport:
    epochs: int = 0
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stop_reason: str = "max_epochs"
    seconds: float = 0.0
    best_epoch: int | None = None

    def to_json(self, include_time: bool = True) -> dict:
        d = {"epochs": self.epochs, "train_loss": self.train_loss, "val_loss": self.val_loss,
             "stop_reason": self.stop_reason, "best_epoch": self.best_epoch}
        if include_time:
            d["seconds"] = self.seconds
        return d


def train(net: _Net, train_set, validation_set, hyper: Hyper, seed: int, state: AdamState | None = None):
    """Mini-batch Adam on MSE; returns the best-validation parameters and a report.

    Stops after ``hyper.patience`` epochs without a relative validation
    improvement above ``hyper.min_delta`` (``patience=None`` runs all epochs).
    Scalers are fitted on ``train_set`` unless the net already has them.
    """
    if len(validation_set) == 0:
        raise ValueError("validation set is empty")
    if hyper.batch < 1 or hyper.batch > len(train_set):
        raise ValueError(f"batch {hyper.batch} must be in 1..{len(train_set)}")
    start = time.perf_counter()
    if net.input_standardizer is None or net.label_transform is None:
        fit_scalers(net, train_set)
    tr, va = _Prepared(net, train_set), _Prepared(net, validation_set)
    everything_tr = tr.batch(np.arange(len(tr)))
    everything_va = va.batch(np.arange(len(va)))
    state = state or AdamState.for_net(net, lr=hyper.lr)
    state.lr = hyper.lr
    rng = np.random.default_rng(seed)
    report = TrainReport()
    best = (math.inf, net.copy().params)
    since_best = 0
    for epoch in range(hyper.max_epochs):
        order = rng.permutation(len(tr))
        for lo in range(0, len(order), hyper.batch):
            batch = tr.batch(np.sort(order[lo:lo + hyper.batch]))
            batch_loss, grads = net.loss_and_grads(*batch, weight_decay=hyper.weight_decay)
            if not math.isfinite(batch_loss):
                raise TrainingDivergence(epoch, batch_loss)
            adam_step(net, grads, state)
        tl, vl = loss(net, everything_tr), loss(net, everything_va)
        if not (math.isfinite(tl) and math.isfinite(vl)):
            raise TrainingDivergence(epoch, tl if not math.isfinite(tl) else vl)
        report.train_loss.append(tl)
        report.val_loss.append(vl)
        report.epochs = epoch + 1
        if vl < best[0] * (1.0 - hyper.min_delta) or best[0] == math.inf:
            best = (vl, {k: p.copy() for k, p in net.params.items()})
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if vl < best[0]:
                best = (vl, {k: p.copy() for k, p in net.params.items()})
                report.best_epoch = epoch
            if hyper.patience is not None and since_best >= hyper.patience:
                report.stop_reason = "patience"
                break
    if report.epochs:
        net.params = best[1]
    report.seconds = time.perf_counter() - start
    return net, report


# --- inference -----------------------------------------------------------------

def predict_cardinality(net: _Net, spec: EncodingSpec, item, row_counts: dict[str, int]) -> int:
    """Invert the predicted selectivity of a query (or join sequence) into a tuple count."""
    net._check_fitted()
    if isinstance(net, RecurrentNet):
        if isinstance(item, Query):
            from .workload import left_deep_orders
            item = JoinSequence.from_order(item, left_deep_orders(item)[0])
        sel = float(net.predict_selectivity([encode_sequence(spec, item)])[0])
        rels = item.order
    else:
        q = item.query if isinstance(item, JoinSequence) else item
        sel = float(net.predict_selectivity(encode_flat(spec, q)[None, :])[0])
        rels = q.relations
    total = math.prod(row_counts[r] for r in rels)
    return int(round(min(max(sel * total, 0.0), total)))


def predict_cardinalities(net: _Net, spec: EncodingSpec, examples, row_counts) -> np.ndarray:
    """Vectorized ``predict_cardinality`` over examples (flat query or stored sequence)."""
    if isinstance(net, RecurrentNet):
        sels = net.predict_selectivity([encode_sequence(spec, ex.sequence) for ex in examples])
    else:
        X = np.array([encode_flat(spec, ex.query) for ex in examples]).reshape(len(examples), spec.width)
        sels = net.predict_selectivity(X)
    totals = np.array([math.prod(row_counts[r] for r in ex.query.relations) for ex in examples], dtype=np.float64)
    return np.rint(np.clip(sels * totals, 0.0, totals))


def parameter_count(net: _Net) -> int:
    return net.parameter_count()


def load_net(obj_or_path):
    if not isinstance(obj_or_path, dict):
        with open(obj_or_path) as fh:
            obj_or_path = json.load(fh)
    obj = obj_or_path
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {obj.get('format_version')}")
    arch = obj["arch"]
    if arch["kind"] == "dense":
        net = DenseNet(arch["input_width"], arch["hidden_widths"], arch["residual"], arch["alpha"])
    elif arch["kind"] == "recurrent":
        net = RecurrentNet(arch["input_width"], arch["hidden_width"], arch["depth"], arch["mode"])
    else:
        raise ValueError(f"unknown net kind {arch['kind']!r}")
    for k, p in obj["parameters"].items():
        net.params[k] = np.array(p["data"], dtype=np.float64).reshape(p["shape"])
    st = obj["standardizers"]
    net.input_standardizer = None if st["input"] is None else Standardizer.from_json(st["input"])
    net.label_transform = None if st["label"] is None else LabelTransform.from_json(st["label"])
    net.seed = obj["seeds"]["init"]
    return net
