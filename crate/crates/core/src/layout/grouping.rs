//! Grouping of OCR lines into segments.
//!
//! 1. Lines are clustered into rows with DBSCAN over their y-centers.
//! 2. Each row is clustered horizontally with DBSCAN over a sparse distance
//!    matrix that only links x-adjacent lines, so a chain of close lines is
//!    never skipped.
//! 3. Each horizontal cluster is split wherever a whitespace band at least
//!    `column_gap` wide separates its tokens.
//!
//! Groups are then ordered top-to-bottom, left-to-right, which fixes the
//! page's reading order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan, dbscan_points, SparseDistances};
use crate::error::{Error, Result};
use crate::io::{GroupRecord, GroupsFile, SCHEMA_VERSION};
use crate::model::{BBox, Line, LineId, Page, ReadingOrder, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub eps_y: f64,
    pub eps_x: f64,
    pub min_pts: usize,
    pub column_gap: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            eps_y: 0.006,
            eps_x: 0.02,
            min_pts: 1,
            column_gap: 0.05,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_y", self.eps_y),
            ("eps_x", self.eps_x),
            ("column_gap", self.column_gap),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Input(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.min_pts == 0 {
            return Err(Error::Input("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// The part of one OCR line that falls inside a group. Unless a column band
/// cuts through the line, this is the whole line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFragment {
    pub line_id: LineId,
    pub token_ids: Vec<TokenId>,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineGroup {
    pub id: usize,
    /// Ordered by y-center, then `x0`.
    pub fragments: Vec<LineFragment>,
    pub bbox: BBox,
    /// Left-to-right position among the groups cut from the same row.
    pub column_index: usize,
}

impl LineGroup {
    pub fn line_ids(&self) -> Vec<LineId> {
        let mut ids: Vec<LineId> = Vec::with_capacity(self.fragments.len());
        for f in &self.fragments {
            if !ids.contains(&f.line_id) {
                ids.push(f.line_id);
            }
        }
        ids
    }

    /// Member tokens in reading order.
    pub fn token_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.fragments.iter().flat_map(|f| f.token_ids.iter().copied())
    }

    pub fn token_count(&self) -> usize {
        self.fragments.iter().map(|f| f.token_ids.len()).sum()
    }
}

/// Groups plus the reading order they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub groups: Vec<LineGroup>,
    pub order: ReadingOrder,
    group_of: HashMap<TokenId, usize>,
}

impl Layout {
    fn new(groups: Vec<LineGroup>, order: ReadingOrder) -> Self {
        let mut group_of = HashMap::with_capacity(order.len());
        for (gi, g) in groups.iter().enumerate() {
            for t in g.token_ids() {
                group_of.insert(t, gi);
            }
        }
        Layout {
            groups,
            order,
            group_of,
        }
    }

    /// Index into `groups` of the group holding `token`.
    pub fn group_of(&self, token: TokenId) -> Option<usize> {
        self.group_of.get(&token).copied()
    }

    pub fn to_record(&self, page: &Page) -> Result<GroupsFile> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let token_ids: Vec<TokenId> = g.token_ids().collect();
                let text = token_ids
                    .iter()
                    .map(|&id| page.token_text(id))
                    .collect::<Result<Vec<_>>>()?
                    .join(" ");
                Ok(GroupRecord {
                    group_id: g.id,
                    column_index: g.column_index,
                    bbox: g.bbox.to_array(),
                    line_ids: g.line_ids(),
                    token_ids,
                    text,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupsFile {
            schema_version: SCHEMA_VERSION.into(),
            page_no: page.page_no(),
            groups,
            reading_order: self.order.tokens().to_vec(),
        })
    }

    /// Rebuild a layout from a groups dump, checking it against `page`.
    pub fn from_record(page: &Page, record: &GroupsFile) -> Result<Self> {
        if record.page_no != page.page_no() {
            return Err(Error::Integrity(format!(
                "groups are for page {} but OCR page is {}",
                record.page_no,
                page.page_no()
            )));
        }
        let mut groups = Vec::with_capacity(record.groups.len());
        for r in &record.groups {
            let mut fragments = Vec::new();
            for &line_id in &r.line_ids {
                let line = page.line(line_id).ok_or_else(|| {
                    Error::Integrity(format!("group {} references missing line {line_id}", r.group_id))
                })?;
                let token_ids: Vec<TokenId> = r
                    .token_ids
                    .iter()
                    .copied()
                    .filter(|t| page.token(*t).is_some_and(|tok| tok.line_id == line_id))
                    .collect();
                fragments.push(fragment(page, line, token_ids));
            }
            let covered: usize = fragments.iter().map(|f| f.token_ids.len()).sum();
            if covered != r.token_ids.len() {
                return Err(Error::Integrity(format!(
                    "group {} lists tokens outside its lines",
                    r.group_id
                )));
            }
            groups.push(LineGroup {
                id: r.group_id,
                fragments,
                bbox: BBox::from_array(r.bbox)?,
                column_index: r.column_index,
            });
        }
        let order = ReadingOrder::from_sequence(record.reading_order.clone())?;
        if !order.covers(page) {
            return Err(Error::Integrity(
                "groups reading order does not cover the page".into(),
            ));
        }
        Ok(Layout::new(groups, order))
    }
}

fn fragment(page: &Page, line: &Line, mut token_ids: Vec<TokenId>) -> LineFragment {
    let whole = token_ids.len() == line.token_ids.len();
    token_ids.sort_by_key(|id| line.token_ids.iter().position(|t| t == id));
    let bbox = if whole {
        line.bbox
    } else {
        BBox::union_all(token_ids.iter().filter_map(|&id| page.token(id)).map(|t| &t.bbox))
            .unwrap_or(line.bbox)
    };
    LineFragment {
        line_id: line.id,
        token_ids,
        bbox,
    }
}

/// Step 1: rows of lines sharing a vertical position, top to bottom.
pub fn cluster_rows<'a>(lines: &[&'a Line], cfg: &GroupingConfig) -> Result<Vec<Vec<&'a Line>>> {
    let centers: Vec<Vec<f64>> = lines.iter().map(|l| vec![l.bbox.y_center()]).collect();
    let labels = dbscan_points(&centers, cfg.eps_y, cfg.min_pts)?;
    let mut rows = collect_clusters(lines, &labels);
    rows.sort_by(|a, b| min_y_center(a).total_cmp(&min_y_center(b)));
    Ok(rows)
}

fn min_y_center(lines: &[&Line]) -> f64 {
    lines
        .iter()
        .map(|l| l.bbox.y_center())
        .fold(f64::INFINITY, f64::min)
}

/// Turn a labeling into member lists; noise points become singletons.
fn collect_clusters<'a>(items: &[&'a Line], labels: &[Option<usize>]) -> Vec<Vec<&'a Line>> {
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Vec<&Line>> = vec![Vec::new(); count];
    let mut noise = Vec::new();
    for (item, label) in items.iter().zip(labels) {
        match label {
            Some(c) => clusters[*c].push(*item),
            None => noise.push(vec![*item]),
        }
    }
    clusters.extend(noise);
    clusters
}

/// Step 2: split one row into horizontally chained clusters, left to right.
pub fn cluster_within_row<'a>(row: &[&'a Line], cfg: &GroupingConfig) -> Result<Vec<Vec<&'a Line>>> {
    let mut sorted: Vec<&Line> = row.to_vec();
    sorted.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0).then(a.id.cmp(&b.id)));
    let mut distances = SparseDistances::new(sorted.len());
    for (i, pair) in sorted.windows(2).enumerate() {
        let gap = (pair[1].bbox.x0 - pair[0].bbox.x1).max(0.0);
        distances.insert(i, i + 1, gap)?;
    }
    let labels = dbscan(&distances, cfg.eps_x, cfg.min_pts)?;
    let mut clusters = collect_clusters(&sorted, &labels);
    clusters.sort_by(|a, b| min_x(a).total_cmp(&min_x(b)));
    Ok(clusters)
}

fn min_x(lines: &[&Line]) -> f64 {
    lines.iter().map(|l| l.bbox.x0).fold(f64::INFINITY, f64::min)
}

/// Whitespace bands at least `min_width` wide between the x-intervals, as
/// `(start, end)` pairs sorted left to right.
pub fn column_bands(intervals: &[(f64, f64)], min_width: f64) -> Vec<(f64, f64)> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bands = Vec::new();
    let mut reach = match sorted.first() {
        Some(&(_, x1)) => x1,
        None => return bands,
    };
    for &(x0, x1) in &sorted[1..] {
        if x0 - reach >= min_width {
            bands.push((reach, x0));
        }
        reach = reach.max(x1);
    }
    bands
}

/// Step 3: split a horizontal cluster at full-height whitespace bands found
/// in its token x-intervals. Returns the parts left to right; a line that
/// spans a band is cut into one fragment per side.
pub fn split_columns(page: &Page, lines: &[&Line], cfg: &GroupingConfig) -> Result<Vec<Vec<LineFragment>>> {
    if lines.is_empty() {
        return Err(Error::Input("cannot split an empty group".into()));
    }
    let intervals: Vec<(f64, f64)> = lines
        .iter()
        .flat_map(|l| l.token_ids.iter())
        .filter_map(|&id| page.token(id))
        .map(|t| (t.bbox.x0, t.bbox.x1))
        .collect();
    let bands = column_bands(&intervals, cfg.column_gap);
    let side = |x: f64| bands.iter().take_while(|&&(start, _)| x >= start).count();

    let mut parts: Vec<Vec<LineFragment>> = vec![Vec::new(); bands.len() + 1];
    for line in lines {
        let mut per_side: Vec<Vec<TokenId>> = vec![Vec::new(); bands.len() + 1];
        for &id in &line.token_ids {
            let tok = page
                .token(id)
                .ok_or_else(|| Error::Integrity(format!("line {} lists missing token {id}", line.id)))?;
            per_side[side(tok.bbox.x_center())].push(id);
        }
        for (s, ids) in per_side.into_iter().enumerate() {
            if !ids.is_empty() {
                parts[s].push(fragment(page, line, ids));
            }
        }
    }
    Ok(parts.into_iter().filter(|p| !p.is_empty()).collect())
}

/// Smallest box containing every member fragment.
pub fn segment_bbox(fragments: &[LineFragment]) -> Result<BBox> {
    BBox::union_all(fragments.iter().map(|f| &f.bbox))
        .ok_or_else(|| Error::Input("segment has no lines".into()))
}

/// Run all three grouping steps and derive the reading order.
pub fn group_page(page: &Page, cfg: &GroupingConfig) -> Result<Layout> {
    cfg.validate()?;
    let lines: Vec<&Line> = page.lines().iter().collect();

    // (ingestion id, group) in creation order
    let mut groups: Vec<LineGroup> = Vec::new();
    for row in cluster_rows(&lines, cfg)? {
        let mut column = 0;
        for cluster in cluster_within_row(&row, cfg)? {
            for mut fragments in split_columns(page, &cluster, cfg)? {
                fragments.sort_by(|a, b| {
                    a.bbox
                        .y_center()
                        .total_cmp(&b.bbox.y_center())
                        .then(a.bbox.x0.total_cmp(&b.bbox.x0))
                        .then(a.line_id.cmp(&b.line_id))
                });
                let bbox = segment_bbox(&fragments)?;
                groups.push(LineGroup {
                    id: groups.len(),
                    fragments,
                    bbox,
                    column_index: column,
                });
                column += 1;
            }
        }
    }

    groups.sort_by(|a, b| {
        a.bbox
            .y0
            .total_cmp(&b.bbox.y0)
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
            .then(a.id.cmp(&b.id))
    });
    for (i, g) in groups.iter_mut().enumerate() {
        g.id = i;
    }

    let order: Vec<TokenId> = groups.iter().flat_map(|g| g.token_ids()).collect();
    let order = ReadingOrder::from_sequence(order)?;
    debug_assert!(order.covers(page));
    Ok(Layout::new(groups, order))
}
