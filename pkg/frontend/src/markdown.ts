// Minimal markdown for math-flavoured chat text: escape first, then apply
// bold / italic / inline code / line breaks. No raw HTML ever passes
// through.

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderMarkdown(text: string): string {
  let html = escapeHtml(text);
  html = html.replace(/`([^`]+)`/g, "<code>$1</code>");
  html = html.replace(/\*\*([^*]+)\*\*/g, "<strong>$1</strong>");
  html = html.replace(/\*([^*]+)\*/g, "<em>$1</em>");
  html = html.replace(/\n/g, "<br>");
  return html;
}

const LEADING_PHASE_TAG = /^\s*[\[【]\s*(REVIEW|GUIDE|RECTIFY|SUMMARY)\s*[\]】]\s*/i;

// The phase badge already shows the phase, so the raw tag is noise in the
// bubble; the view model keeps the exact server text.
export function stripPhaseTag(text: string): string {
  return text.replace(LEADING_PHASE_TAG, "");
}
