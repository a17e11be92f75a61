// Tiny DOM helpers; no framework.
export const el = (tag, attrs = {}, children = []) => {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        if (key === 'class')
            node.className = value;
        else
            node.setAttribute(key, value);
    }
    for (const child of children) {
        node.append(child);
    }
    return node;
};
export const clear = (node) => {
    while (node.firstChild)
        node.removeChild(node.firstChild);
};
// Plate images are tiny rasters; render at native resolution (pixelated,
// no smoothing) with an optional integer zoom toggle.
export const plateImage = (src, alt) => {
    const img = el('img', { src, alt, class: 'plate' });
    img.addEventListener('click', () => img.classList.toggle('zoomed'));
    return img;
};
