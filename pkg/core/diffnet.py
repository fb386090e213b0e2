"""
미분 엔진 (역전파 자동 미분)
============================

예측 모델을 학습시키려면 "손실을 줄이려면 각 파라미터를 어느 쪽으로
얼마나 바꿔야 하는가" (기울기, gradient)를 알아야 합니다.
이 모듈은 그 기울기를 자동으로 계산합니다.

[원리 설명 - 테이프(tape)]

순방향 계산을 하면서 "어떤 연산을 했는지"를 테이프에 차례로 적어둡니다.

    with Tape() as tape:
        u = matmul(x, W)        테이프: [matmul]
        s = tanh(add(u, b))     테이프: [matmul, add, tanh]
        L = reduce_sum(s)       테이프: [matmul, add, tanh, reduce_sum]
    tape.backward(L)

역방향은 테이프를 거꾸로 읽으며 연쇄 법칙(chain rule)을 적용합니다.

    dL/dL = 1
      → reduce_sum의 역방향 → dL/ds
      → tanh의 역방향       → dL/d(u+b)
      → add의 역방향        → dL/du, dL/db
      → matmul의 역방향     → dL/dW

테이프는 기록 순서가 곧 위상 정렬 순서이므로, 거꾸로 한 번 훑으면
모든 노드를 정확히 한 번씩 방문합니다.

테이프가 없을 때(추론, 플래너)는 아무것도 기록하지 않습니다.

[지원 연산]
    matmul, add, sub, mul, scale, tanh, sigmoid, relu,
    concat, slice, reshape, reduce_sum, reduce_mean,
    sigmoid_cross_entropy, softmax_cross_entropy, squared_error
    gru_cell (위 연산의 조합)

브로드캐스팅은 "2차원 + 1차원 편향(bias) 더하기"만 허용합니다.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core.archive import read_archive, write_archive
from core.errors import DatasetError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, Sequence[float]]


class Tensor:
    """
    값(numpy 배열) + 기울기

    requires_grad=True인 텐서에서 나온 계산만 테이프에 기록됩니다.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # 연산자 편의 문법
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeRecord:
    """테이프 한 줄: 연산 이름, 입력, 출력, 역방향 함수"""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


_ACTIVE_TAPES: List["Tape"] = []


class Tape:
    """
    연산 기록 테이프 (with 문으로 사용)

    [사용 예시]
    with Tape() as tape:
        loss = model_loss(...)
    tape.backward(loss)
    """

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPES.remove(self)

    def backward(self, output: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """
        output에서 시작해 테이프를 거꾸로 읽으며 기울기를 누적합니다.
        순방향 값(.data)은 바꾸지 않습니다.
        """
        output.grad = np.ones_like(output.data) if seed is None else np.array(seed, dtype=np.float64)
        for record in reversed(self.records):
            g = record.output.grad
            if g is None:
                continue
            grads = record.backward(g)
            for tensor, grad in zip(record.inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise ShapeError(f"{record.op}.backward", grad.shape, tensor.shape)
                tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def _as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(op: str, inputs: Tuple[Tensor, ...], data: np.ndarray, backward) -> Tensor:
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad and _ACTIVE_TAPES:
        _ACTIVE_TAPES[-1].records.append(TapeRecord(op, inputs, out, backward))
    return out


def logistic(z: np.ndarray) -> np.ndarray:
    # 큰 음수에서 exp 넘침 방지
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ============================================================
# 기본 연산
# ============================================================
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m, k) @ (k, n) → (m, n)"""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T, ad.T @ g)

    return _record("matmul", (a, b), ad @ bd, backward)


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> bool:
    """같은 모양이면 False, (m, n) + (n,) 편향이면 True, 그 외 ShapeError"""
    if a.shape == b.shape:
        return False
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return True
    raise ShapeError(op, a.shape, b.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bias = _binary_shapes("add", a, b)

    def backward(g):
        return (g, g.sum(axis=0) if bias else g)

    return _record("add", (a, b), a.data + b.data, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bias = _binary_shapes("sub", a, b)

    def backward(g):
        return (g, -(g.sum(axis=0) if bias else g))

    return _record("sub", (a, b), a.data - b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """원소별 곱 (같은 모양만)"""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        return (g * bd, g * ad)

    return _record("mul", (a, b), ad * bd, backward)


def scale(a: Tensor, c: float) -> Tensor:
    """상수 곱"""
    a = _as_tensor(a)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _record("scale", (a,), a.data * c, backward)


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _record("tanh", (a,), y, backward)


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    y = logistic(a.data)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _record("sigmoid", (a,), y, backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    on = a.data > 0

    def backward(g):
        return (g * on,)

    return _record("relu", (a,), a.data * on, backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat")
    ndim = tensors[0].data.ndim
    ax = axis % ndim
    for t in tensors:
        other = [s for k, s in enumerate(t.shape) if k != ax]
        first = [s for k, s in enumerate(tensors[0].shape) if k != ax]
        if t.data.ndim != ndim or other != first:
            raise ShapeError("concat", *(x.shape for x in tensors))
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _record("concat", tensors, np.concatenate([t.data for t in tensors], axis=ax), backward)


def slice(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:  # noqa: A001
    """axis 방향 [start, stop) 구간"""
    a = _as_tensor(a)
    ax = axis % a.data.ndim
    if not 0 <= start < stop <= a.shape[ax]:
        raise ShapeError(f"slice[{start}:{stop}]", a.shape)
    index = [np.s_[:]] * a.data.ndim
    index[ax] = np.s_[start:stop]
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _record("slice", (a,), a.data[index], backward)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    original = a.shape

    def backward(g):
        return (g.reshape(original),)

    return _record("reshape", (a,), out, backward)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    a = _as_tensor(a)
    original = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, original).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), original).copy(),)

    return _record("reduce_sum", (a,), np.sum(a.data, axis=axis), backward)


def reduce_mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    a = _as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis), 1.0 / max(count, 1))


# ============================================================
# 손실 함수
# ============================================================
def sigmoid_cross_entropy(logits: Tensor, targets: ArrayLike) -> Tensor:
    """
    원소별 이진 교차 엔트로피 (로짓 입력)

        L = max(z, 0) − z·y + log(1 + exp(−|z|))
        dL/dz = σ(z) − y

    targets는 상수 (기울기 없음)
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError("sigmoid_cross_entropy", logits.shape, y.shape)
    z = logits.data
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    p = logistic(z)

    def backward(g):
        return (g * (p - y),)

    return _record("sigmoid_cross_entropy", (logits,), loss, backward)


def softmax_cross_entropy(logits: Tensor, targets: ArrayLike) -> Tensor:
    """
    행별 소프트맥스 교차 엔트로피: (B, C) → (B,)

        L_b = −Σ_c y_bc · log softmax(z_b)_c
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if logits.data.ndim != 2 or y.shape != logits.shape:
        raise ShapeError("softmax_cross_entropy", logits.shape, y.shape)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_softmax = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    soft = np.exp(log_softmax)
    loss = -(y * log_softmax).sum(axis=1)
    y_total = y.sum(axis=1, keepdims=True)

    def backward(g):
        return (g[:, None] * (soft * y_total - y),)

    return _record("softmax_cross_entropy", (logits,), loss, backward)


def squared_error(pred: Tensor, target: ArrayLike) -> Tensor:
    """원소별 제곱 오차 (pred − target)²"""
    pred = _as_tensor(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError("squared_error", pred.shape, t.shape)
    diff = pred.data - t

    def backward(g):
        return (2.0 * g * diff,)

    return _record("squared_error", (pred,), diff * diff, backward)


# ============================================================
# 순환 셀 (GRU)
# ============================================================
GRU_PARAM_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def gru_cell(h: Tensor, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """
    게이트 순환 셀 한 스텝

    [계산]
        z  = σ(x·W_z + h·U_z + b_z)          업데이트 게이트
        r  = σ(x·W_r + h·U_r + b_r)          리셋 게이트
        h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)  후보 상태
        h' = h + z ⊙ (h̃ − h)                = (1 − z)⊙h + z⊙h̃

    모든 가중치가 0이면 z = 0.5, h̃ = 0 → h' = 0.5·h

    Args:
        h: (hidden,) 또는 (B, hidden)
        x: (input,) 또는 (B, input)
        params: GRU_PARAM_NAMES 이름의 텐서
    """
    h, x = _as_tensor(h), _as_tensor(x)
    single = h.data.ndim == 1
    if single:
        h = reshape(h, (1, h.shape[0]))
        x = reshape(x, (1, x.shape[0]))
    hidden = params["U_z"].shape[0]
    if h.shape[1] != hidden or x.shape[1] != params["W_z"].shape[0] or h.shape[0] != x.shape[0]:
        raise ShapeError("gru_cell", h.shape, x.shape, params["W_z"].shape, params["U_z"].shape)

    z = sigmoid(add(add(matmul(x, params["W_z"]), matmul(h, params["U_z"])), params["b_z"]))
    r = sigmoid(add(add(matmul(x, params["W_r"]), matmul(h, params["U_r"])), params["b_r"]))
    h_tilde = tanh(add(add(matmul(x, params["W_h"]), matmul(mul(r, h), params["U_h"])), params["b_h"]))
    h_new = add(h, mul(z, sub(h_tilde, h)))

    if single:
        return reshape(h_new, (hidden,))
    return h_new


# ============================================================
# 파라미터 저장소와 Adam
# ============================================================
class ParamStore:
    """
    이름 붙은 파라미터 θ + Adam 누적값 (1차/2차 모멘트) + 스텝 수
    """

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"이미 있는 파라미터 이름입니다: {name}")
        tensor = Tensor(value, requires_grad=True, name=name)
        self.params[name] = tensor
        self.m[name] = np.zeros_like(tensor.data)
        self.v[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> List[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        """기울기 딕셔너리 (기울기가 없는 파라미터는 0)"""
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.params.items()
        }

    def values(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        for name, value in values.items():
            if name not in self.params:
                raise DatasetError(f"모르는 파라미터입니다: {name}")
            if self.params[name].shape != value.shape:
                raise ShapeError(f"load[{name}]", self.params[name].shape, value.shape)
            self.params[name].data = np.array(value, dtype=np.float64)

    def count(self) -> int:
        return sum(t.size for t in self.params.values())


def adam_update(
    store: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    Adam 한 스텝 (제자리 갱신)

        m ← β1·m + (1−β1)·g
        v ← β2·v + (1−β2)·g²
        m̂ = m / (1 − β1^t),  v̂ = v / (1 − β2^t)
        θ ← θ − lr · m̂ / (√v̂ + eps)

    기울기에 NaN/Inf가 있으면 아무것도 바꾸지 않고 NonFiniteError
    """
    for name, g in grads.items():
        if name not in store.params:
            raise KeyError(f"모르는 파라미터입니다: {name}")
        if g.shape != store.params[name].shape:
            raise ShapeError(f"adam_update[{name}]", store.params[name].shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"기울기에 NaN/Inf가 있습니다: {name}")

    store.step += 1
    t = store.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name in sorted(grads):
        g = grads[name]
        store.m[name] = beta1 * store.m[name] + (1.0 - beta1) * g
        store.v[name] = beta2 * store.v[name] + (1.0 - beta2) * g * g
        m_hat = store.m[name] / correction1
        v_hat = store.v[name] / correction2
        param = store.params[name]
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def finite_difference_grad(fn: Callable[[], float], tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """
    중앙 차분으로 기울기 근사 (기울기 검사용)

        df/dθ_i ≈ (f(θ + ε·e_i) − f(θ − ε·e_i)) / 2ε
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn()
        flat[i] = original - eps
        minus = fn()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def save_params(store: ParamStore, path: str, meta: Mapping) -> str:
    """파라미터 값 + 메타 정보를 아카이브로 저장 (Adam 누적값은 저장하지 않음)"""
    arrays = {f"param/{name}": t.data for name, t in store.params.items()}
    full_meta = dict(meta)
    full_meta["param_shapes"] = {name: list(t.shape) for name, t in sorted(store.params.items())}
    return write_archive(path, arrays, full_meta)


def load_params(path: str) -> Tuple[Dict[str, np.ndarray], Dict]:
    arrays, meta = read_archive(path)
    values = {key[len("param/"):]: arr for key, arr in arrays.items() if key.startswith("param/")}
    shapes = meta.get("param_shapes", {})
    for name, value in values.items():
        if name in shapes and list(value.shape) != list(shapes[name]):
            raise DatasetError(f"체크포인트 파라미터 모양이 메타 정보와 다릅니다: {name}")
    return values, meta
