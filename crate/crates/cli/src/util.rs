//! Small I/O and parallelism helpers shared by the stages.

use std::io::Write;
use std::path::Path;

use anyhow::Context;

/// Read a JSON Lines file into values, skipping blank lines.
pub fn read_jsonl(path: &Path) -> anyhow::Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad JSON line", path.display(), index + 1))?;
        rows.push(value);
    }
    Ok(rows)
}

/// Write values as JSON Lines (one compact object per line).
pub fn write_jsonl(path: &Path, rows: &[serde_json::Value]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        serde_json::to_writer(&mut file, row)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Order-preserving parallel map over an index range. With `jobs <= 1`
/// the closure runs inline; otherwise the range is split into contiguous
/// chunks, one thread each, and results are concatenated in order, so the
/// output is identical for every job count.
pub fn parallel_map<T, F>(items: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if jobs <= 1 || items <= 1 {
        return (0..items).map(f).collect();
    }
    let jobs = jobs.min(items);
    let chunk = items.div_ceil(jobs);
    let mut results: Vec<Vec<T>> = Vec::with_capacity(jobs);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(jobs);
        for worker in 0..jobs {
            let start = worker * chunk;
            let end = ((worker + 1) * chunk).min(items);
            let f = &f;
            handles.push(scope.spawn(move || (start..end).map(f).collect::<Vec<T>>()));
        }
        for handle in handles {
            results.push(handle.join().expect("worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}
