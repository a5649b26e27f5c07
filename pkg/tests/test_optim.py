import math

import pytest
import torch
from hypothesis import given, strategies as st

from conchshell.optim import OptimizerConfig, lr_at_step, make_adamw, set_lr

CFG = OptimizerConfig()


def test_paper_schedule_values():
    assert lr_at_step("generator", 0, CFG) == 1e-5
    assert lr_at_step("generator", 20000, CFG) == 8e-6
    assert lr_at_step("discriminator", 40000, CFG) == 8.1e-6


def test_breakpoints_at_multiples_of_interval():
    assert lr_at_step("generator", 19999, CFG) == 1e-5
    assert lr_at_step("generator", 39999, CFG) == 8e-6
    assert lr_at_step("discriminator", 20000, CFG) == 9e-6


@given(st.integers(0, 10**6), st.integers(0, 10**5), st.sampled_from(["generator", "discriminator"]))
def test_non_increasing_and_piecewise_constant(step, delta, role):
    a, b = lr_at_step(role, step, CFG), lr_at_step(role, step + delta, CFG)
    assert b <= a
    if step // 20000 == (step + delta) // 20000:
        assert a == b


def test_bad_inputs():
    with pytest.raises(ValueError):
        lr_at_step("generator", -1, CFG)
    with pytest.raises(ValueError):
        lr_at_step("critic", 0, CFG)


@pytest.mark.parametrize("kw", [dict(beta1=1.0), dict(beta2=-0.1), dict(lr0=0.0), dict(gen_decay=0.0),
                                dict(disc_decay=1.5), dict(decay_every=0), dict(batch_size=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_adamw_single_step_on_quadratic():
    a, x0, lr, wd, eps = 3.0, 2.0, 0.1, 0.01, 1e-8
    x = torch.tensor([x0], dtype=torch.float64, requires_grad=True)
    opt = make_adamw([x], OptimizerConfig(weight_decay=wd), lr=lr)
    (0.5 * a * x ** 2).sum().backward()
    opt.step()
    g = a * x0
    # bias-corrected first moments equal g and g^2 after one step
    m_hat, v_hat = g, g * g
    expected = x0 * (1 - lr * wd) - lr * m_hat / (math.sqrt(v_hat) + eps)
    assert abs(float(x.detach()) - expected) < 1e-12


def test_adamw_betas_from_config():
    opt = make_adamw([torch.zeros(1, requires_grad=True)], CFG)
    group = opt.param_groups[0]
    assert group["betas"] == (0.5, 0.999) and group["lr"] == 1e-5 and group["weight_decay"] == 0.01
    set_lr(opt, 3e-6)
    assert opt.param_groups[0]["lr"] == 3e-6
