def test_placeholder():
    import prognos  # noqa
