import pytest

from conftest import make_conv, make_corpus
from dispute_tactics.tasks.catalog import LabelsetCatalog, build_catalog, map_to_catalog
from dispute_tactics.taxonomy import labels


def _corpus():
    return make_corpus(make_conv(("refutation",), ("refutation",), ("other",), ("policing", "other"),
                                 ("refutation", "other"), ("refutation", "other")))


def test_build_catalog_order_and_coverage():
    cat = build_catalog(_corpus(), k=2)
    assert cat.labelsets == (labels("refutation"), labels("refutation", "other"))
    assert cat.frequencies == (2, 2)
    assert cat.coverage == pytest.approx(4 / 6)
    assert build_catalog(_corpus(), k=100).coverage == 1.0
    with pytest.raises(ValueError):
        build_catalog(_corpus(), k=0)


def test_fallback_to_largest_subset():
    cat = build_catalog(_corpus(), k=3)
    assert map_to_catalog(labels("refutation", "other", "asking-questions"), cat) == 1
    assert map_to_catalog(labels("policing", "other"), cat) == 2
    assert map_to_catalog(labels("derailing"), cat) is None


def test_dict_round_trip():
    cat = build_catalog(_corpus())
    assert LabelsetCatalog.from_dict(cat.to_dict()) == cat
