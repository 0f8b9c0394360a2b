import pytest

from engramlab.mapping import DEFAULT_INDEX, MODELLED_OPERATIONS, check_index_completeness


def _copy_without(tmp_path, drop=None, extra=None):
    lines = DEFAULT_INDEX.read_text().splitlines()
    if drop is not None:
        lines = [l for l in lines if f"\t{drop}\t" not in l]
    if extra is not None:
        lines.append(extra)
    p = tmp_path / "index.tsv"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_shipped_index_is_complete():
    report = check_index_completeness()
    assert report.ok, str(report)
    assert str(report) == "index complete"


def test_deleting_an_entry_names_the_operation(tmp_path):
    report = check_index_completeness(_copy_without(tmp_path, drop="kl_bernoulli"))
    assert not report.ok
    assert report.missing == ["regularizers.kl_bernoulli"]
    assert "kl_bernoulli" in str(report)


def test_bogus_entry_is_named(tmp_path):
    extra = "made-up\tA relation nobody implements\tsdm\tteleport\t-"
    report = check_index_completeness(_copy_without(tmp_path, extra=extra))
    assert report.unregistered == ["sdm.teleport"]
    assert "sdm.teleport" in str(report)


def test_duplicate_and_malformed_rows(tmp_path):
    dup = "hebbian-again\tdup\tplasticity\thebbian_derivative\t-"
    report = check_index_completeness(_copy_without(tmp_path, extra=dup))
    assert report.duplicates == ["plasticity.hebbian_derivative"]
    report = check_index_completeness(_copy_without(tmp_path, extra="only\ttwo"))
    assert report.malformed and not report.ok


def test_registered_names_must_exist(tmp_path):
    report = check_index_completeness(registered=MODELLED_OPERATIONS + ("sdm.nothing_here",))
    assert report.unresolved == ["sdm.nothing_here"]
    assert report.missing == ["sdm.nothing_here"]


def test_missing_index_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        check_index_completeness(tmp_path / "absent.tsv")


def test_bad_header(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("a\tb\n")
    with pytest.raises(ValueError):
        check_index_completeness(p)
