"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class MissingGradientError(RuntimeError):
    """A parameter reached the optimizer without a populated gradient."""

    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} has no gradient; run backward() first")
        self.name = name


@dataclass
class AdamState:
    """Moment estimates and schedule state for one optimization run.

    ``learning_rate`` starts at the configured initial rate and is
    multiplied by ``decay_factor`` once per epoch via :meth:`Adam.decay_lr`.
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_factor: float = 0.8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """Standard Adam with bias correction on a list of (name, Tensor) pairs."""

    def __init__(self, params, learning_rate=1e-4, beta1=0.9, beta2=0.999,
                 epsilon=1e-8, decay_factor=0.8):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if not 0 < decay_factor <= 1:
            raise ValueError(f"decay_factor must be in (0, 1], got {decay_factor}")
        self.params: list[tuple[str, Tensor]] = list(params)
        self.state = AdamState(learning_rate, beta1, beta2, epsilon, decay_factor)
        for name, p in self.params:
            self.state.first_moment[name] = np.zeros_like(p.data)
            self.state.second_moment[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        """Apply one Adam update to every parameter in place."""
        st = self.state
        st.step_count += 1
        c1 = 1.0 - st.beta1 ** st.step_count
        c2 = 1.0 - st.beta2 ** st.step_count
        for name, p in self.params:
            if p.grad is None:
                raise MissingGradientError(name)
            g = p.grad
            m = st.first_moment[name]
            v = st.second_moment[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + st.epsilon)
            p.data -= (st.learning_rate * update).astype(p.dtype, copy=False)

    def decay_lr(self):
        self.state.learning_rate *= self.state.decay_factor
