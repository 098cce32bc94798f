import math

from xbarsim.costmodel import load_default_hardware_config
from xbarsim.fit import fit_hardware_config, verify


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}.{k}" if prefix else str(k)
        if isinstance(v, dict):
            out.update(_flatten(v, key))
        else:
            out[key] = v
    return out


def test_fit_reproduces_shipped_config():
    fitted, _ = fit_hardware_config()
    shipped = load_default_hardware_config()
    a = _flatten(fitted.to_dict())
    b = _flatten(shipped.to_dict())
    assert a.keys() == b.keys()
    for key in a:
        va, vb = a[key], b[key]
        if isinstance(va, bool) or isinstance(va, str):
            assert va == vb, key
        else:
            assert math.isclose(float(va), float(vb), rel_tol=1e-9, abs_tol=1e-12), key


def test_shipped_config_passes_all_reproduction_checks():
    checks = verify(load_default_hardware_config())
    failures = {k: d for k, (ok, d) in checks.items() if not ok}
    assert not failures, failures
